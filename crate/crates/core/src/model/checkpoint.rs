//! Model checkpoint text format: `dim=<d>`, then the bias, then one weight per line.

use std::io::{BufRead, Write};

use super::{ModelError, ModelParams, Result};

pub fn write_checkpoint<W: Write>(mut out: W, params: &ModelParams) -> Result<()> {
    writeln!(out, "dim={}", params.dimension())?;
    writeln!(out, "{:?}", params.bias)?;
    for w in &params.weights {
        writeln!(out, "{w:?}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<ModelParams> {
    let bad = |line: usize, message: String| ModelError::Checkpoint { line, message };
    let mut lines = input.lines();
    let header = lines.next().transpose()?.ok_or_else(|| bad(1, "empty checkpoint".into()))?;
    let dim: usize = header
        .trim()
        .strip_prefix("dim=")
        .and_then(|d| d.parse().ok())
        .ok_or_else(|| bad(1, format!("bad header {header:?}")))?;
    let mut values = Vec::with_capacity(dim + 1);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: f64 = line.trim().parse().map_err(|e| bad(i + 2, format!("{e}")))?;
        values.push(v);
    }
    if values.len() != dim + 1 {
        return Err(bad(0, format!("expected {} values, found {}", dim + 1, values.len())));
    }
    let bias = values.remove(0);
    Ok(ModelParams { weights: values, bias })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let p = ModelParams { weights: vec![0.1, -1.0 / 3.0, 1e-300, 5e300], bias: -0.0 };
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, p);
        assert!(String::from_utf8(buf).unwrap().starts_with("dim=4\n-0.0\n0.1\n"));
    }

    #[test]
    fn wrong_count_is_rejected() {
        assert!(read_checkpoint("dim=2\n0.0\n1.0\n".as_bytes()).is_err());
        assert!(read_checkpoint("".as_bytes()).is_err());
        assert!(matches!(
            read_checkpoint("dim=1\n0.0\nabc\n".as_bytes()),
            Err(ModelError::Checkpoint { line: 3, .. })
        ));
    }
}
