//! Text snapshots for Q-functions and encoders. Floats are written with
//! Rust's shortest round-trip formatting, so parse(serialize(x)) restores
//! the exact bits.
//!
//! Tabular Q-functions serialize as a sorted key/value listing; linear ones
//! and encoders as dimension headers plus row-major coefficients. Snapshots
//! capture what greedy evaluation needs, not optimizer state (visit counts
//! are omitted).

use std::fmt;

use crate::auxgen::{Encoder, LinearEncoder, MlpEncoder};
use crate::env::N_ACTIONS;
use crate::learner::{QFunction, StateKey};

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for SnapshotError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "snapshot line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for SnapshotError {}

fn err(line: usize, message: impl Into<String>) -> SnapshotError {
    SnapshotError { line, message: message.into() }
}

fn floats(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn serialize_q(q: &QFunction) -> String {
    let mut out = String::new();
    if let Some(rows) = q.tabular_rows() {
        let (q0, visit_decay) = q.tabular_default().unwrap();
        out.push_str("qfunction tabular\n");
        out.push_str(&format!("gamma {}\n", q.gamma));
        out.push_str(&format!("alpha {}\n", q.alpha));
        out.push_str(&format!("q0 {q0}\n"));
        out.push_str(&format!("visit_decay {visit_decay}\n"));
        out.push_str(&format!("entries {}\n", rows.len()));
        for (key, values) in rows {
            out.push_str(&format!("{key:016x} {}\n", floats(&values)));
        }
    } else {
        let weights = q.linear_weights().unwrap();
        out.push_str("qfunction linear\n");
        out.push_str(&format!("gamma {}\n", q.gamma));
        out.push_str(&format!("alpha {}\n", q.alpha));
        out.push_str(&format!("features {}\n", weights[0].len()));
        for (a, row) in weights.iter().enumerate() {
            out.push_str(&format!("action {a} {}\n", floats(row)));
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines { inner: text.lines().enumerate() }
    }

    fn next(&mut self) -> Result<(usize, &'a str), SnapshotError> {
        self.inner.next().map(|(i, l)| (i + 1, l)).ok_or_else(|| err(0, "unexpected end"))
    }

    /// Consumes a `name value...` line and returns the value fields.
    fn field(&mut self, name: &str) -> Result<(usize, Vec<&'a str>), SnapshotError> {
        let (n, line) = self.next()?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some(head) if head == name => Ok((n, parts.collect())),
            other => Err(err(n, format!("expected field {name:?}, got {other:?}"))),
        }
    }
}

fn parse_f64(n: usize, s: &str) -> Result<f64, SnapshotError> {
    s.parse::<f64>().map_err(|_| err(n, format!("bad float {s:?}")))
}

fn parse_floats(n: usize, parts: &[&str]) -> Result<Vec<f64>, SnapshotError> {
    parts.iter().map(|s| parse_f64(n, s)).collect()
}

fn single<'a>(n: usize, parts: &[&'a str]) -> Result<&'a str, SnapshotError> {
    if parts.len() == 1 {
        Ok(parts[0])
    } else {
        Err(err(n, format!("expected one value, got {}", parts.len())))
    }
}

pub fn parse_q(text: &str) -> Result<QFunction, SnapshotError> {
    let mut lines = Lines::new(text);
    let (n, parts) = lines.field("qfunction")?;
    let kind = single(n, &parts)?;
    let (n, parts) = lines.field("gamma")?;
    let gamma = parse_f64(n, single(n, &parts)?)?;
    let (n, parts) = lines.field("alpha")?;
    let alpha = parse_f64(n, single(n, &parts)?)?;
    match kind {
        "tabular" => {
            let (n, parts) = lines.field("q0")?;
            let q0 = parse_f64(n, single(n, &parts)?)?;
            let (n, parts) = lines.field("visit_decay")?;
            let visit_decay = match single(n, &parts)? {
                "true" => true,
                "false" => false,
                other => return Err(err(n, format!("bad bool {other:?}"))),
            };
            let (n, parts) = lines.field("entries")?;
            let count: usize =
                single(n, &parts)?.parse().map_err(|_| err(n, "bad entry count"))?;
            let mut q = QFunction::tabular(gamma, alpha, q0, visit_decay);
            for _ in 0..count {
                let (n, line) = lines.next()?;
                let mut parts = line.split_whitespace();
                let key = parts
                    .next()
                    .and_then(|k| StateKey::from_str_radix(k, 16).ok())
                    .ok_or_else(|| err(n, "bad state key"))?;
                let values = parse_floats(n, &parts.collect::<Vec<_>>())?;
                if values.len() != N_ACTIONS {
                    return Err(err(n, format!("expected {N_ACTIONS} action values")));
                }
                let mut row = [0.0; N_ACTIONS];
                row.copy_from_slice(&values);
                q.insert_tabular_row(key, row);
            }
            Ok(q)
        }
        "linear" => {
            let (n, parts) = lines.field("features")?;
            let dim: usize =
                single(n, &parts)?.parse().map_err(|_| err(n, "bad feature count"))?;
            let mut weights = Vec::with_capacity(N_ACTIONS);
            for a in 0..N_ACTIONS {
                let (n, parts) = lines.field("action")?;
                if parts.first() != Some(&a.to_string().as_str()) {
                    return Err(err(n, format!("expected action {a}")));
                }
                let row = parse_floats(n, &parts[1..])?;
                if row.len() != dim {
                    return Err(err(n, format!("expected {dim} weights")));
                }
                weights.push(row);
            }
            let mut q = QFunction::linear(dim, gamma, alpha);
            q.set_linear_weights(weights);
            Ok(q)
        }
        other => Err(err(n, format!("unknown qfunction kind {other:?}"))),
    }
}

pub fn serialize_encoder(encoder: &Encoder) -> String {
    let mut out = String::new();
    match encoder {
        Encoder::Identity { dim } => {
            out.push_str("encoder identity\n");
            out.push_str(&format!("input {dim}\n"));
        }
        Encoder::Linear(l) => {
            out.push_str("encoder linear\n");
            out.push_str(&format!("input {}\n", l.mean.len()));
            out.push_str(&format!("latent {}\n", l.basis.len()));
            out.push_str(&format!("degenerate {}\n", l.degenerate_dims));
            out.push_str(&format!("mean {}\n", floats(&l.mean)));
            for row in &l.basis {
                out.push_str(&format!("basis {}\n", floats(row)));
            }
            out.push_str(&format!("lo {}\n", floats(&l.lo)));
            out.push_str(&format!("hi {}\n", floats(&l.hi)));
        }
        Encoder::Mlp { net, lo, hi } => {
            out.push_str("encoder mlp\n");
            out.push_str(&format!("input {}\n", net.l1.in_dim));
            out.push_str(&format!("latent {}\n", net.mu.out_dim));
            for (name, layer) in [("l1", &net.l1), ("l2", &net.l2), ("mu", &net.mu)] {
                out.push_str(&format!("layer {name} {} {}\n", layer.in_dim, layer.out_dim));
                out.push_str(&format!("weights {}\n", floats(&layer.weights)));
                out.push_str(&format!("bias {}\n", floats(&layer.bias)));
            }
            out.push_str(&format!("lo {}\n", floats(lo)));
            out.push_str(&format!("hi {}\n", floats(hi)));
        }
    }
    out
}

pub fn parse_encoder(text: &str) -> Result<Encoder, SnapshotError> {
    let mut lines = Lines::new(text);
    let (n, parts) = lines.field("encoder")?;
    let kind = single(n, &parts)?;
    match kind {
        "identity" => {
            let (n, parts) = lines.field("input")?;
            let dim: usize = single(n, &parts)?.parse().map_err(|_| err(n, "bad dim"))?;
            Ok(Encoder::Identity { dim })
        }
        "linear" => {
            let (n, parts) = lines.field("input")?;
            let input: usize = single(n, &parts)?.parse().map_err(|_| err(n, "bad dim"))?;
            let (n, parts) = lines.field("latent")?;
            let latent: usize = single(n, &parts)?.parse().map_err(|_| err(n, "bad dim"))?;
            let (n, parts) = lines.field("degenerate")?;
            let degenerate_dims: usize =
                single(n, &parts)?.parse().map_err(|_| err(n, "bad count"))?;
            let (n, parts) = lines.field("mean")?;
            let mean = parse_floats(n, &parts)?;
            if mean.len() != input {
                return Err(err(n, "mean length mismatch"));
            }
            let mut basis = Vec::with_capacity(latent);
            for _ in 0..latent {
                let (n, parts) = lines.field("basis")?;
                let row = parse_floats(n, &parts)?;
                if row.len() != input {
                    return Err(err(n, "basis row length mismatch"));
                }
                basis.push(row);
            }
            let (n, parts) = lines.field("lo")?;
            let lo = parse_floats(n, &parts)?;
            let (n2, parts) = lines.field("hi")?;
            let hi = parse_floats(n2, &parts)?;
            if lo.len() != latent || hi.len() != latent {
                return Err(err(n, "bounds length mismatch"));
            }
            Ok(Encoder::Linear(LinearEncoder { mean, basis, lo, hi, degenerate_dims }))
        }
        "mlp" => {
            let (_, _) = lines.field("input")?;
            let (_, _) = lines.field("latent")?;
            let mut layers = Vec::new();
            for expected in ["l1", "l2", "mu"] {
                let (n, parts) = lines.field("layer")?;
                if parts.first() != Some(&expected) {
                    return Err(err(n, format!("expected layer {expected}")));
                }
                let in_dim: usize =
                    parts[1].parse().map_err(|_| err(n, "bad layer dims"))?;
                let out_dim: usize =
                    parts[2].parse().map_err(|_| err(n, "bad layer dims"))?;
                let (n, parts) = lines.field("weights")?;
                let weights = parse_floats(n, &parts)?;
                if weights.len() != in_dim * out_dim {
                    return Err(err(n, "weight count mismatch"));
                }
                let (n, parts) = lines.field("bias")?;
                let bias = parse_floats(n, &parts)?;
                if bias.len() != out_dim {
                    return Err(err(n, "bias count mismatch"));
                }
                layers.push(crate::auxgen::Dense { in_dim, out_dim, weights, bias });
            }
            let mu = layers.pop().unwrap();
            let l2 = layers.pop().unwrap();
            let l1 = layers.pop().unwrap();
            let (n, parts) = lines.field("lo")?;
            let lo = parse_floats(n, &parts)?;
            let (n2, parts) = lines.field("hi")?;
            let hi = parse_floats(n2, &parts)?;
            if lo.len() != mu.out_dim || hi.len() != mu.out_dim {
                return Err(err(n, "bounds length mismatch"));
            }
            Ok(Encoder::Mlp { net: MlpEncoder { l1, l2, mu }, lo, hi })
        }
        other => Err(err(n, format!("unknown encoder kind {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Action;
    use crate::learner::QState;
    use crate::rng::RngStream;

    #[test]
    fn tabular_round_trip_is_exact() {
        let mut q = QFunction::tabular(0.97, 0.1, 0.25, true);
        let mut rng = RngStream::from_seed(31);
        for k in 0..40u64 {
            let key = rng.next_u64();
            q.update(&QState::Key(key), Action::from_index(k as usize % 9), rng.next_f64() * 3.0 - 1.5, &QState::Key(key ^ 1), k % 3 == 0)
                .unwrap();
        }
        let text = serialize_q(&q);
        let back = parse_q(&text).unwrap();
        assert_eq!(serialize_q(&back), text);
        for (key, values) in q.tabular_rows().unwrap() {
            assert_eq!(back.action_values(&QState::Key(key)), values);
        }
    }

    #[test]
    fn linear_round_trip_is_exact() {
        let mut q = QFunction::linear(4, 0.9, 0.05);
        let x = QState::Features(vec![0.1, -0.7, 0.33, 1.0]);
        for i in 0..9 {
            q.update(&x, Action::from_index(i), (i as f64) / 3.0, &x, i % 2 == 0).unwrap();
        }
        let text = serialize_q(&q);
        let back = parse_q(&text).unwrap();
        assert_eq!(serialize_q(&back), text);
        assert_eq!(back.action_values(&x), q.action_values(&x));
    }

    #[test]
    fn keys_are_sorted_in_the_listing() {
        let mut q = QFunction::tabular(0.9, 0.1, 0.0, false);
        for key in [9u64, 2, 7, 1] {
            q.update(&QState::Key(key), Action::NoOp, 1.0, &QState::Key(0), true).unwrap();
        }
        let text = serialize_q(&q);
        let keys: Vec<&str> = text
            .lines()
            .skip(6)
            .map(|l| l.split_whitespace().next().unwrap())
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn malformed_snapshots_name_the_line() {
        let e = parse_q("qfunction tabular\ngamma x\n").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn encoder_round_trips() {
        let id = Encoder::identity(25);
        assert_eq!(parse_encoder(&serialize_encoder(&id)).unwrap(), id);

        let lin = Encoder::Linear(LinearEncoder {
            mean: vec![0.5, 0.25, 0.125],
            basis: vec![vec![1.0, 0.0, 0.0], vec![0.0, -0.6, 0.8]],
            lo: vec![-0.1, 0.0],
            hi: vec![0.9, 1.0],
            degenerate_dims: 0,
        });
        let text = serialize_encoder(&lin);
        assert_eq!(parse_encoder(&text).unwrap(), lin);
    }
}
