pub mod clustering;
pub mod sampling;
pub mod silhouette;
pub mod tables;
