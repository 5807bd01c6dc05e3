//! Box embeddings: a center and a non-negative offset per query.

use rand::Rng;

use super::{EmbVar, Model, Result};
use crate::numerics::{Axis, NdArray, ParameterStore, Tape, Var};

const OFFSET: &str = "q2b.relation.offset";

pub(super) fn init<R: Rng>(
    store: &mut ParameterStore,
    d: usize,
    rel_rows: usize,
    bound: f64,
    rng: &mut R,
) -> Result<()> {
    store.add(
        "q2b.relation.center",
        NdArray::uniform(&[rel_rows, d], -bound, bound, rng),
    )?;
    store.add(OFFSET, NdArray::uniform(&[rel_rows, d], 0.0, bound, rng))?;
    store.add("q2b.att.w1", NdArray::xavier(2 * d, d, rng))?;
    store.add("q2b.att.b1", NdArray::zeros(&[1, d]))?;
    store.add("q2b.att.w2", NdArray::xavier(d, d, rng))?;
    store.add("q2b.att.b2", NdArray::zeros(&[1, d]))?;
    store.add("q2b.ds.w1", NdArray::xavier(2 * d, d, rng))?;
    store.add("q2b.ds.b1", NdArray::zeros(&[1, d]))?;
    store.add("q2b.ds.w2", NdArray::xavier(d, d, rng))?;
    store.add("q2b.ds.b2", NdArray::zeros(&[1, d]))?;
    Ok(())
}

pub(super) fn clamp_offsets(store: &mut ParameterStore) {
    if let Ok(id) = store.id(OFFSET) {
        for v in store.value_mut(id).data_mut() {
            *v = v.max(0.0);
        }
    }
}

/// `(c + c_r, o + o_r)`.
pub(super) fn project(m: &Model, t: &mut Tape, c: Var, o: Var, row: usize) -> Result<EmbVar> {
    let s = m.store();
    let (ct, ot) = (
        t.param(s.id("q2b.relation.center")?),
        t.param(s.id(OFFSET)?),
    );
    let cr = t.gather_rows(ct, &[row])?;
    let or = t.gather_rows(ot, &[row])?;
    Ok(EmbVar::Box {
        center: t.add(c, cr)?,
        offset: t.add(o, or)?,
    })
}

/// Attention-weighted centers and a shrunken minimum offset.
pub(super) fn intersect(m: &Model, t: &mut Tape, boxes: &[(Var, Var)]) -> Result<EmbVar> {
    let s = m.store();
    let p = |t: &mut Tape, name: &str| -> Result<Var> { Ok(t.param(s.id(name)?)) };
    let centers: Vec<Var> = boxes.iter().map(|b| b.0).collect();
    let offsets: Vec<Var> = boxes.iter().map(|b| b.1).collect();
    let c = t.concat(&centers, Axis::Rows)?;
    let o = t.concat(&offsets, Axis::Rows)?;
    let x = t.concat(&[c, o], Axis::Cols)?;

    let (w1, b1, w2, b2) = (
        p(t, "q2b.att.w1")?,
        p(t, "q2b.att.b1")?,
        p(t, "q2b.att.w2")?,
        p(t, "q2b.att.b2")?,
    );
    let h = t.linear(x, w1, b1)?;
    let h = t.relu(h)?;
    let logits = t.linear(h, w2, b2)?;
    let a = t.softmax(logits, Axis::Rows)?;
    let weighted = t.mul(a, c)?;
    let center = t.reduce_sum(weighted, Axis::Rows)?;

    let (v1, c1, v2, c2) = (
        p(t, "q2b.ds.w1")?,
        p(t, "q2b.ds.b1")?,
        p(t, "q2b.ds.w2")?,
        p(t, "q2b.ds.b2")?,
    );
    let g = t.linear(x, v1, c1)?;
    let g = t.relu(g)?;
    let pooled = t.reduce_mean(g, Axis::Rows)?;
    let gate = t.linear(pooled, v2, c2)?;
    let gate = t.sigmoid(gate)?;
    let min = t.reduce_min(o, Axis::Rows)?;
    Ok(EmbVar::Box {
        center,
        offset: t.mul(min, gate)?,
    })
}

/// `-(dist_outside + alpha * dist_inside)` for each entity row, as a row.
pub(super) fn score(t: &mut Tape, c: Var, o: Var, ents: Var, alpha: f64) -> Result<Var> {
    let diff = t.sub(ents, c)?;
    let delta = t.abs(diff)?;
    let excess = t.sub(delta, o)?;
    let outside = t.relu(excess)?;
    let inside = t.sub(delta, outside)?;
    let d_out = t.reduce_sum(outside, Axis::Cols)?;
    let d_in = t.reduce_sum(inside, Axis::Cols)?;
    let d_in = t.scale(d_in, alpha)?;
    let dist = t.add(d_out, d_in)?;
    let dist = t.transpose(dist)?;
    Ok(t.neg(dist)?)
}
