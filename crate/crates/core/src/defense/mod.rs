//! Countermeasures: scaled validation images and a layer pipeline split
//! across independent designers.

mod altered;
mod distributed;
mod report;

pub use altered::{alter_validation, evaluate_altered_defense, AdversaryParams, AlteredDataset, ScaleMode, ScalePlan};
pub use distributed::{
    chain_forward, evaluate_distributed_defense, partition, DesignerView, PartitionSpec, ViewFragment,
};
pub use report::{DefenseKind, DefenseReport, Verdict};

#[cfg(test)]
mod tests;
