pub mod bitcoin;
pub mod discv4;
pub mod rlp;
pub mod session;
