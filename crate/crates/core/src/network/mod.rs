//! The frozen VGG16-prefix extractor, the trainable classifier head, and
//! the machinery to run, differentiate, save and visualize them.

mod exec;
mod featmaps;
mod params;
mod spec;
mod weights;

pub use exec::{backward, forward, infer, LayerRecord, Tape};
pub use featmaps::{dump_feature_maps, normalize_plane};
pub use params::{Param, ParamStore};
pub use spec::{
    build_classifier, build_feature_extractor, LayerKind, LayerSpec, NetworkSpec, EXTRACTOR_CONVS,
    FEATURE_CHANNELS, FEATURE_SIZE, INPUT_SIZE, NUM_CLASSES,
};
pub use weights::{load_weights, read_container, save_weights, write_container, MAGIC, VERSION};
