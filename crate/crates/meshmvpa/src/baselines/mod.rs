//! Comparison feature pipelines: PCA extraction and Searchlight voxel
//! selection with Gaussian naive Bayes scoring.

pub mod pca;
pub mod searchlight;

pub use pca::{pca_fit, pca_fit_auto, pca_transform, PcaModel};
pub use searchlight::{
    searchlight_scores, searchlight_select, snap_to_grid, threshold_grid, SearchlightConfig,
};
