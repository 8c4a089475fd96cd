pub mod images;
pub mod mocap;
pub mod rigid;
