//! Unpaired image-to-label translation: two generators, two patch
//! discriminators, cycle and adversarial losses, and the training loop.

pub mod augment;
pub mod loss;
pub mod nets;
pub mod train;
pub mod translate;

pub use augment::{apply_ops, augment, AugmentConfig, AugmentOps};
pub use loss::{
    adversarial_loss, cycle_loss, discriminator_terms, generator_adv_loss, AdvMode, AdversarialTerms, Bound,
    CycleTerms, DiscScores, DiscTerms, Mapping, LOG_FLOOR,
};
pub use nets::{NetKind, NetSpec, Network, ParamSet};
pub use train::{
    checkpoint_stem, load_domain, select_channels, train, train_domains, Domain, GanState, StepLosses, StepReport,
    TrainConfig, TrainMeta, TrainOutcome, LOSS_LOG_HEADER, NET_NAMES, REFERENCE_LR,
};
pub use translate::{best_index, select_epoch, translate_to_labels, EpochSelection, LabelTranslator};
