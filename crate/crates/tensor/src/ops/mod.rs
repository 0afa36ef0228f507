pub mod conv;
pub mod elementwise;
pub mod linear;
pub mod loss;
pub mod pool;
