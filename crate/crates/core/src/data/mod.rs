//! Datasets, the non-IID partitioner, toy distributions and resampling.

mod dataset;
mod glyphs;
mod partition;
mod resize;
mod toy;

pub use dataset::{LabeledDataset, UnlabeledView};
pub use glyphs::{glyph_dataset, GLYPH_CLASSES, GLYPH_SIZE};
pub use partition::{dirichlet_partition, PartitionPlan, PARTITION_STREAM};
pub use resize::downscale;
pub use toy::{MixtureComponent, ToyDistribution};
