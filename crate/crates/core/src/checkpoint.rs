//! Text checkpoint format, version `C2HM-CKPT v1`.
//!
//! Layout:
//!
//! ```text
//! C2HM-CKPT v1
//! <d> <k> <D> <num_classes>
//! <section name> <layer count>        # goal_embed, sim, dec, cyc_enc, cyc_dec
//! <rows> <cols> <activation>          # per layer
//! <row of floats>                     # rows lines, 17 significant digits
//! ...
//! <bias line>
//! ```
//!
//! The goal embedding table is written as a single identity "layer" with an
//! all-zero bias so the grammar stays uniform. Floats are printed with 17
//! significant digits, which round-trips every f64 exactly; serialize(parse)
//! reproduces a written file byte-for-byte.

use crate::error::{Error, Result};
use crate::model::{Activation, C2hmParams, Layer, MlpParams, ModelDims};
use crate::tensor::Tensor;
use std::fs;
use std::path::Path;

const MAGIC: &str = "C2HM-CKPT v1";

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_matrix(out: &mut String, t: &Tensor) {
    let (rows, cols) = (t.shape()[0], t.shape()[1]);
    for r in 0..rows {
        let mut line = String::with_capacity(cols * 24);
        for c in 0..cols {
            if c > 0 {
                line.push(' ');
            }
            line.push_str(&fmt_f64(t.at2(r, c)));
        }
        out.push_str(&line);
        out.push('\n');
    }
}

fn write_vector(out: &mut String, t: &Tensor) {
    let mut line = String::with_capacity(t.len() * 24);
    for (i, v) in t.data().iter().enumerate() {
        if i > 0 {
            line.push(' ');
        }
        line.push_str(&fmt_f64(*v));
    }
    out.push_str(&line);
    out.push('\n');
}

pub fn serialize(params: &C2hmParams) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    let d = params.dims;
    out.push_str(&format!(
        "{} {} {} {}\n",
        d.content_dim, d.latent_dim, d.obs_dim, d.num_classes
    ));

    // embedding table as a one-layer section with zero bias
    out.push_str("goal_embed 1\n");
    out.push_str(&format!(
        "{} {} identity\n",
        d.num_classes, d.content_dim
    ));
    write_matrix(&mut out, &params.goal_embed);
    write_vector(&mut out, &Tensor::zeros(&[d.num_classes]));

    for (name, mlp) in [
        ("sim", &params.sim),
        ("dec", &params.dec),
        ("cyc_enc", &params.cyc_enc),
        ("cyc_dec", &params.cyc_dec),
    ] {
        out.push_str(&format!("{name} {}\n", mlp.layers.len()));
        for layer in &mlp.layers {
            out.push_str(&format!(
                "{} {} {}\n",
                layer.out_dim(),
                layer.in_dim(),
                layer.act.name()
            ));
            write_matrix(&mut out, &layer.w);
            write_vector(&mut out, &layer.b);
        }
    }
    out
}

pub fn save(params: &C2hmParams, path: &Path) -> Result<()> {
    fs::write(path, serialize(params))?;
    Ok(())
}

struct Lines<'a> {
    inner: std::str::Lines<'a>,
    lineno: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        self.lineno += 1;
        self.inner
            .next()
            .ok_or_else(|| Error::Format(format!("checkpoint truncated at line {}", self.lineno)))
    }
}

fn parse_floats(line: &str, expect: usize, lineno: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Format(format!("bad float '{s}' at line {lineno}")))
        })
        .collect::<Result<_>>()?;
    if vals.len() != expect {
        return Err(Error::Format(format!(
            "expected {expect} values at line {lineno}, got {}",
            vals.len()
        )));
    }
    Ok(vals)
}

fn parse_layer(lines: &mut Lines) -> Result<Layer> {
    let header = lines.next()?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(Error::Format(format!(
            "bad layer header '{header}' at line {}",
            lines.lineno
        )));
    }
    let rows: usize = parts[0]
        .parse()
        .map_err(|_| Error::Format(format!("bad row count at line {}", lines.lineno)))?;
    let cols: usize = parts[1]
        .parse()
        .map_err(|_| Error::Format(format!("bad col count at line {}", lines.lineno)))?;
    let act = Activation::parse(parts[2])?;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let line = lines.next()?;
        data.extend(parse_floats(line, cols, lines.lineno)?);
    }
    let w = Tensor::new(vec![rows, cols], data)?;
    let bias_line = lines.next()?;
    let b = Tensor::new(vec![rows], parse_floats(bias_line, rows, lines.lineno)?)?;
    Ok(Layer { w, b, act })
}

fn parse_section(lines: &mut Lines, expect_name: &str) -> Result<MlpParams> {
    let header = lines.next()?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 2 || parts[0] != expect_name {
        return Err(Error::Format(format!(
            "expected section '{expect_name}' at line {}, got '{header}'",
            lines.lineno
        )));
    }
    let count: usize = parts[1]
        .parse()
        .map_err(|_| Error::Format(format!("bad layer count at line {}", lines.lineno)))?;
    if count == 0 {
        return Err(Error::Format(format!(
            "section '{expect_name}' has zero layers"
        )));
    }
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        layers.push(parse_layer(lines)?);
    }
    Ok(MlpParams { layers })
}

pub fn parse(text: &str) -> Result<C2hmParams> {
    let mut lines = Lines {
        inner: text.lines(),
        lineno: 0,
    };
    let magic = lines.next()?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "bad checkpoint magic '{magic}', expected '{MAGIC}'"
        )));
    }
    let dims_line = lines.next()?;
    let nums: Vec<usize> = dims_line
        .split_whitespace()
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad dims line '{dims_line}'")))
        })
        .collect::<Result<_>>()?;
    if nums.len() != 4 {
        return Err(Error::Format(format!("bad dims line '{dims_line}'")));
    }
    let dims = ModelDims {
        content_dim: nums[0],
        latent_dim: nums[1],
        obs_dim: nums[2],
        num_classes: nums[3],
    };

    let embed_section = parse_section(&mut lines, "goal_embed")?;
    if embed_section.layers.len() != 1 {
        return Err(Error::Format("goal_embed must be a single table".into()));
    }
    let embed_layer = &embed_section.layers[0];
    if embed_layer.b.data().iter().any(|&v| v != 0.0) {
        return Err(Error::Format("goal_embed bias must be all zeros".into()));
    }
    let goal_embed = embed_layer.w.clone();

    let sim = parse_section(&mut lines, "sim")?;
    let dec = parse_section(&mut lines, "dec")?;
    let cyc_enc = parse_section(&mut lines, "cyc_enc")?;
    let cyc_dec = parse_section(&mut lines, "cyc_dec")?;

    let params = C2hmParams {
        dims,
        goal_embed,
        sim,
        dec,
        cyc_enc,
        cyc_dec,
    };
    params.validate()?;
    Ok(params)
}

pub fn load(path: &Path) -> Result<C2hmParams> {
    let text = fs::read_to_string(path)?;
    parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ModelDims};
    use crate::rng::SeededRng;

    fn sample_params() -> C2hmParams {
        let mut rng = SeededRng::new(42);
        let cfg = ModelConfig {
            dims: ModelDims {
                content_dim: 2,
                latent_dim: 3,
                obs_dim: 5,
                num_classes: 4,
            },
            hidden_dim: 6,
            hidden_layers: 1,
            dec_output: Activation::Sigmoid,
        };
        C2hmParams::init(&cfg, &mut rng).unwrap()
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let params = sample_params();
        let text = serialize(&params);
        let parsed = parse(&text).unwrap();
        assert_eq!(parsed, params);
        assert_eq!(serialize(&parsed), text);
    }

    #[test]
    fn rejects_bad_magic() {
        let params = sample_params();
        let text = serialize(&params).replace(MAGIC, "C2HM-CKPT v9");
        match parse(&text) {
            Err(Error::Format(msg)) => assert!(msg.contains("magic"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_truncation() {
        let params = sample_params();
        let text = serialize(&params);
        let cut = &text[..text.len() / 2];
        assert!(parse(cut).is_err());
    }

    #[test]
    fn rejects_dimension_tampering() {
        let params = sample_params();
        let text = serialize(&params);
        // claim k=7 while the stored networks still realize k=3
        let tampered = text.replacen("2 3 5 4", "2 7 7 4", 1);
        assert!(parse(&tampered).is_err());
    }
}
