//! Vector embeddings with translation projection.

use rand::Rng;

use super::{EmbVar, Model, Result};
use crate::numerics::{Axis, NdArray, ParameterStore, Tape, Var};

pub(super) fn init<R: Rng>(
    store: &mut ParameterStore,
    d: usize,
    rel_rows: usize,
    bound: f64,
    rng: &mut R,
) -> Result<()> {
    store.add(
        "gqe.relation",
        NdArray::uniform(&[rel_rows, d], -bound, bound, rng),
    )?;
    store.add("gqe.ffn.w", NdArray::xavier(d, d, rng))?;
    store.add("gqe.ffn.b", NdArray::zeros(&[1, d]))?;
    store.add("gqe.inter.w", NdArray::xavier(d, d, rng))?;
    Ok(())
}

/// `q + e_r`.
pub(super) fn project(m: &Model, t: &mut Tape, q: Var, row: usize) -> Result<EmbVar> {
    let table = t.param(m.store().id("gqe.relation")?);
    let r = t.gather_rows(table, &[row])?;
    Ok(EmbVar::Vector(t.add(q, r)?))
}

/// `W_I · mean_k(relu(q_k W + b))`.
pub(super) fn intersect(m: &Model, t: &mut Tape, qs: &[Var]) -> Result<EmbVar> {
    let s = m.store();
    let (w, b, wi) = (
        t.param(s.id("gqe.ffn.w")?),
        t.param(s.id("gqe.ffn.b")?),
        t.param(s.id("gqe.inter.w")?),
    );
    let stacked = t.concat(qs, Axis::Rows)?;
    let h = t.linear(stacked, w, b)?;
    let h = t.relu(h)?;
    let pooled = t.reduce_mean(h, Axis::Rows)?;
    Ok(EmbVar::Vector(t.matmul(pooled, wi)?))
}

/// Negative Euclidean distance from each entity row to `q`, as a row.
pub(super) fn score(t: &mut Tape, q: Var, ents: Var) -> Result<Var> {
    let dist = t.distances(ents, q)?;
    Ok(t.neg(dist)?)
}
