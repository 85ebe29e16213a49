//! Geometric contrastive pretraining for protein pockets and small-molecule ligands.
//!
//! The crate bundles the pieces needed for a desk-scale run end to end:
//!
//! - [`tensornn`]: dense MLPs with hand-written backpropagation and optimizers.
//! - [`biograph`]: the 3D graph model for pockets and ligands, plus file formats.
//! - [`ggmp`]: gated geometric message passing layers, the stacked encoder and the
//!   pairwise energy used to verify the update rules.
//! - [`fingerprint`]: hashed circular fingerprints and Tanimoto similarity.
//! - [`contrast`]: the contrastive loss family with chemistry-weighted negatives.
//! - [`pretrain`]: datasets, batching, the training loop and checkpoints.
//! - [`evalkit`]: ROC-AUC, enrichment (RE) scores, pocket matching and screening.
//! - [`synth`]: a synthetic pocket/ligand family generator.

pub mod biograph;
pub mod contrast;
pub mod error;
pub mod evalkit;
pub mod fingerprint;
pub mod ggmp;
pub mod gradcheck;
pub mod pretrain;
pub mod rng;
pub mod synth;
pub mod tensornn;

pub use error::{Error, ErrorKind, Result};
