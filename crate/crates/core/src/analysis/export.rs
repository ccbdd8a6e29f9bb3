use std::fmt::Write;

use super::purity::SymbolAssignment;
use crate::agents::Sender;
use crate::error::Result;
use crate::scalar::Scalar;
use crate::worldgen::World;

/// One CSV row per concept, in concept id order: category id, majority
/// symbol (empty when the concept was never a target), then the mean of the
/// sender's game embedding over the concept's instances.
pub fn export_embeddings<F: Scalar>(world: &World<F>, sender: &Sender<F>, assign: &SymbolAssignment) -> Result<String> {
    let d = sender.dims().embed_dim;
    let mut out = String::from("category,majority_symbol");
    for j in 0..d {
        let _ = write!(out, ",e{j}");
    }
    out.push('\n');
    for concept in &world.concepts {
        let instances = world.instances_of(concept.concept_id);
        let mut mean = vec![0.0f64; d];
        for inst in instances {
            for (m, e) in mean.iter_mut().zip(sender.embedding(&inst.features)?) {
                *m += e.as_f64();
            }
        }
        let n = instances.len().max(1) as f64;
        let _ = write!(out, "{},", concept.category_id);
        if let Some(s) = assign.symbol_of(concept.concept_id) {
            let _ = write!(out, "{s}");
        }
        for m in mean {
            let _ = write!(out, ",{:.16e}", m / n);
        }
        out.push('\n');
    }
    Ok(out)
}
