//! Particle embeddings: `k` points per query, moved by gated projection and
//! self-attention.

use rand::Rng;

use super::{EmbVar, Model, Result};
use crate::numerics::{Axis, NdArray, ParameterStore, Tape, Var};

pub(super) fn init<R: Rng>(
    store: &mut ParameterStore,
    d: usize,
    k: usize,
    rel_rows: usize,
    bound: f64,
    rng: &mut R,
) -> Result<()> {
    store.add(
        "q2p.relation",
        NdArray::uniform(&[rel_rows, d], -bound, bound, rng),
    )?;
    store.add(
        "q2p.anchor.offset",
        NdArray::uniform(&[k.max(1), d], -bound, bound, rng),
    )?;
    for gate in ["z", "r", "h"] {
        store.add(&format!("q2p.proj.w{gate}"), NdArray::xavier(d, d, rng))?;
        store.add(&format!("q2p.proj.u{gate}"), NdArray::xavier(d, d, rng))?;
        store.add(&format!("q2p.proj.b{gate}"), NdArray::zeros(&[1, d]))?;
    }
    for prefix in ["q2p.proj.att", "q2p.inter.att"] {
        for m in ["q", "k", "v"] {
            store.add(&format!("{prefix}.w{m}"), NdArray::xavier(d, d, rng))?;
        }
    }
    store.add("q2p.inter.mlp.w1", NdArray::xavier(d, d, rng))?;
    store.add("q2p.inter.mlp.b1", NdArray::zeros(&[1, d]))?;
    store.add("q2p.inter.mlp.w2", NdArray::xavier(d, d, rng))?;
    store.add("q2p.inter.mlp.b2", NdArray::zeros(&[1, d]))?;
    Ok(())
}

fn param(m: &Model, t: &mut Tape, name: &str) -> Result<Var> {
    Ok(t.param(m.store().id(name)?))
}

/// Entity embedding plus one learned offset per particle.
pub(super) fn anchor(m: &Model, t: &mut Tape, row: Var) -> Result<EmbVar> {
    let offsets = param(m, t, "q2p.anchor.offset")?;
    Ok(EmbVar::Particles(t.add(offsets, row)?))
}

fn self_attention(m: &Model, t: &mut Tape, x: Var, prefix: &str) -> Result<Var> {
    let wq = param(m, t, &format!("{prefix}.wq"))?;
    let wk = param(m, t, &format!("{prefix}.wk"))?;
    let wv = param(m, t, &format!("{prefix}.wv"))?;
    let q = t.matmul(x, wq)?;
    let k = t.matmul(x, wk)?;
    let v = t.matmul(x, wv)?;
    Ok(t.attention(q, k, v)?)
}

fn gate(m: &Model, t: &mut Tape, rel: Var, q: Var, g: &str) -> Result<Var> {
    let w = param(m, t, &format!("q2p.proj.w{g}"))?;
    let u = param(m, t, &format!("q2p.proj.u{g}"))?;
    let b = param(m, t, &format!("q2p.proj.b{g}"))?;
    let a = t.matmul(rel, w)?;
    let c = t.linear(q, u, b)?;
    Ok(t.add(c, a)?)
}

/// Gated update toward the relation, then self-attention across particles.
pub(super) fn project(m: &Model, t: &mut Tape, q: Var, row: usize) -> Result<EmbVar> {
    let table = param(m, t, "q2p.relation")?;
    let rel = t.gather_rows(table, &[row])?;
    let z = gate(m, t, rel, q, "z")?;
    let z = t.sigmoid(z)?;
    let r = gate(m, t, rel, q, "r")?;
    let r = t.sigmoid(r)?;
    let rq = t.mul(r, q)?;
    let h = gate(m, t, rel, rq, "h")?;
    let h = t.tanh(h)?;
    let ones = t.constant(NdArray::full(t.shape(z), 1.0))?;
    let keep = t.sub(ones, z)?;
    let kept = t.mul(keep, q)?;
    let moved = t.mul(z, h)?;
    let a = t.add(kept, moved)?;
    Ok(EmbVar::Particles(self_attention(m, t, a, "q2p.proj.att")?))
}

/// Attention over all incoming particles, an MLP, then slot-wise averaging
/// back to `k` particles.
pub(super) fn intersect(m: &Model, t: &mut Tape, ps: &[Var]) -> Result<EmbVar> {
    let k = m.config().particles;
    let n = ps.len();
    let all = t.concat(ps, Axis::Rows)?;
    let att = self_attention(m, t, all, "q2p.inter.att")?;
    let (w1, b1) = (
        param(m, t, "q2p.inter.mlp.w1")?,
        param(m, t, "q2p.inter.mlp.b1")?,
    );
    let (w2, b2) = (
        param(m, t, "q2p.inter.mlp.w2")?,
        param(m, t, "q2p.inter.mlp.b2")?,
    );
    let h = t.linear(att, w1, b1)?;
    let h = t.relu(h)?;
    let out = t.linear(h, w2, b2)?;
    let mut slots = Vec::with_capacity(k);
    for j in 0..k {
        let rows: Vec<usize> = (0..n).map(|i| i * k + j).collect();
        let sel = t.select(out, Axis::Rows, &rows)?;
        slots.push(t.reduce_mean(sel, Axis::Rows)?);
    }
    Ok(EmbVar::Particles(t.concat(&slots, Axis::Rows)?))
}

/// Negative distance from each entity to its nearest particle, as a row.
pub(super) fn score(t: &mut Tape, p: Var, ents: Var, k: usize) -> Result<Var> {
    let mut rows = Vec::with_capacity(k);
    for j in 0..k {
        let pj = t.select(p, Axis::Rows, &[j])?;
        rows.push(t.distances(ents, pj)?);
    }
    let nearest = if rows.len() == 1 {
        rows[0]
    } else {
        let all = t.concat(&rows, Axis::Rows)?;
        t.reduce_min(all, Axis::Rows)?
    };
    Ok(t.neg(nearest)?)
}
