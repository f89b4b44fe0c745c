//! From a segmented slide to a bag of instance features and labels.

pub mod bag;
pub mod builder;
pub mod classes;
pub mod features;

pub use bag::Bag;
pub use builder::{
    assign_instance_label, build_bag, crop_patches, filter_blank, patch_windows, InstanceConfig, SlideIds,
};
pub use classes::ClassSet;
pub use features::{aggregate, extract_features};
