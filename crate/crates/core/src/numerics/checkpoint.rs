//! Text checkpoint of a [`ParameterStore`].
//!
//! ```text
//! pngdb-params 1
//! <name>\t<d0>x<d1>...\t<v0> <v1> ...
//! ```
//!
//! One parameter per line in registration order. Values use Rust's shortest
//! round-trip exponent formatting, so a reload is bit-exact. Optimizer state
//! is not saved.

use std::io::{BufRead, BufReader, Read, Write};

use super::{NdArray, NumericsError, ParameterStore, Result};

pub const CHECKPOINT_HEADER: &str = "pngdb-params 1";

pub fn write_checkpoint<W: Write>(store: &ParameterStore, mut w: W) -> Result<()> {
    writeln!(w, "{CHECKPOINT_HEADER}")?;
    for id in store.ids() {
        let v = store.value(id);
        let dims: Vec<String> = v.shape().iter().map(|d| d.to_string()).collect();
        write!(w, "{}\t{}\t", store.name(id), dims.join("x"))?;
        for (i, x) in v.data().iter().enumerate() {
            if i > 0 {
                w.write_all(b" ")?;
            }
            write!(w, "{x:e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(reader: R) -> Result<ParameterStore> {
    let mut lines = BufReader::new(reader).lines();
    let bad = |line: usize, msg: &str| NumericsError::Checkpoint {
        line,
        msg: msg.to_string(),
    };
    match lines.next() {
        Some(Ok(h)) if h.trim_end() == CHECKPOINT_HEADER => {}
        Some(Err(e)) => return Err(e.into()),
        _ => return Err(bad(1, "missing or unsupported header")),
    }
    let mut store = ParameterStore::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(name), Some(dims), Some(values)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(bad(lineno, "expected `name<TAB>shape<TAB>values`"));
        };
        let shape = dims
            .split('x')
            .map(|d| d.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad(lineno, "bad shape"))?;
        let data = values
            .split_ascii_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad(lineno, "bad value"))?;
        let array = NdArray::from_vec(shape, data)
            .map_err(|_| bad(lineno, "value count does not match shape"))?;
        store.add(name, array)?;
    }
    Ok(store)
}
