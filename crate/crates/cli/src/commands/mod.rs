pub mod bench;
pub mod gradcheck;
pub mod paramcount;
pub mod train;
pub mod transform;
