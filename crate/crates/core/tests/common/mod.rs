pub mod criteria;
pub mod qp_oracle;
