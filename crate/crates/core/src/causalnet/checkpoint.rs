//! Text checkpoints with hexadecimal floats for bit-exact round trips.
//!
//! ```text
//! causalnet-checkpoint 1
//! input image 1 32 32
//! conv_channels 8 16
//! diverter_width 32
//! branch_hidden 16
//! input_scale 0x1.0101010101010p-8
//! target_shift 0x0p+0
//! target_scale 0x1p+0
//! seed 7
//! entries 20
//! param input.conv.weight 8x1x3x3
//! <values>
//! buffer input.bn.running_mean 8
//! <values>
//! end
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hexfloat;
use crate::numerics::Tensor;

use super::{build_causalnet, CausalNet, CausalNetConfig, InputShape};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "causalnet-checkpoint";

fn values_line(out: &mut String, data: &[f64]) {
    for (i, &v) in data.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        hexfloat::write_hex(out, v);
    }
    out.push('\n');
}

fn dims(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

pub fn checkpoint_to_string(model: &CausalNet) -> String {
    let c = &model.config;
    let mut out = format!("{MAGIC} {CHECKPOINT_VERSION}\n");
    match c.input {
        InputShape::Image { channels, height, width } => {
            out.push_str(&format!("input image {channels} {height} {width}\n"))
        }
        InputShape::Flat(p) => out.push_str(&format!("input flat {p}\n")),
    }
    out.push_str(&format!("conv_channels {} {}\n", c.conv_channels[0], c.conv_channels[1]));
    out.push_str(&format!("diverter_width {}\n", c.diverter_width));
    out.push_str(&format!("branch_hidden {}\n", c.branch_hidden));
    out.push_str(&format!("input_scale {}\n", hexfloat::format(c.input_scale)));
    out.push_str(&format!("target_shift {}\n", hexfloat::format(model.target_shift)));
    out.push_str(&format!("target_scale {}\n", hexfloat::format(model.target_scale)));
    out.push_str(&format!("seed {}\n", c.seed));
    let g = model.graph();
    let entries = g.params().count() + 2 * g.norm_states().len();
    out.push_str(&format!("entries {entries}\n"));
    for (name, t) in g.params() {
        out.push_str(&format!("param {name} {}\n", dims(t.shape())));
        values_line(&mut out, t.data());
    }
    for st in g.norm_states() {
        out.push_str(&format!("buffer {}.running_mean {}\n", st.name, st.running_mean.len()));
        values_line(&mut out, &st.running_mean);
        out.push_str(&format!("buffer {}.running_var {}\n", st.name, st.running_var.len()));
        values_line(&mut out, &st.running_var);
    }
    out.push_str("end\n");
    out
}

pub fn save_checkpoint(model: &CausalNet, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_to_string(model)).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    lines: std::str::Lines<'a>,
    origin: &'a str,
}

impl<'a> Reader<'a> {
    fn bad(&self, detail: impl Into<String>) -> Error {
        Error::format(self.origin, detail)
    }

    fn next(&mut self, what: &str) -> Result<&'a str> {
        self.lines
            .next()
            .ok_or_else(|| Error::format(self.origin, format!("file ends before {what}")))
    }

    /// Reads `key v1 v2 …`, returning the values.
    fn field(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let line = self.next(&format!("the `{key}` field"))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.bad(format!("expected `{key}`, found `{line}`")));
        }
        Ok(parts.collect())
    }

    fn usize_field(&mut self, key: &str, count: usize) -> Result<Vec<usize>> {
        let vals = self.field(key)?;
        if vals.len() != count {
            return Err(self.bad(format!("`{key}` takes {count} value(s)")));
        }
        vals.iter()
            .map(|v| v.parse().map_err(|_| self.bad(format!("bad `{key}` value `{v}`"))))
            .collect()
    }

    fn hex_field(&mut self, key: &str) -> Result<f64> {
        let vals = self.field(key)?;
        match vals.as_slice() {
            [v] => hexfloat::parse(v).ok_or_else(|| self.bad(format!("bad `{key}` value `{v}`"))),
            _ => Err(self.bad(format!("`{key}` takes one value"))),
        }
    }

    fn entry(&mut self, kind: &str, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let what = format!("{kind} `{name}`");
        let head = self.next(&what)?;
        let expect = format!("{kind} {name} {}", dims(shape));
        if head != expect {
            return Err(self.bad(format!("expected `{expect}`, found `{head}`")));
        }
        let line = self.next(&format!("the values of {what}"))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|v| hexfloat::parse(v).ok_or_else(|| self.bad(format!("bad value `{v}` in {what}"))))
            .collect::<Result<_>>()?;
        let want: usize = shape.iter().product();
        if vals.len() != want {
            return Err(self.bad(format!("{what} has {} of {want} values", vals.len())));
        }
        Ok(vals)
    }
}

pub fn parse_checkpoint(text: &str, origin: &str) -> Result<CausalNet> {
    let mut r = Reader {
        lines: text.lines(),
        origin,
    };
    let version = r.field(MAGIC)?;
    if version != [CHECKPOINT_VERSION.to_string().as_str()] {
        return Err(r.bad(format!("unsupported checkpoint version {version:?}")));
    }
    let input = r.field("input")?;
    let parse = |v: &str| v.parse::<usize>().map_err(|_| Error::format(origin, format!("bad input extent `{v}`")));
    let input = match input.as_slice() {
        ["image", c, h, w] => InputShape::Image {
            channels: parse(c)?,
            height: parse(h)?,
            width: parse(w)?,
        },
        ["flat", p] => InputShape::Flat(parse(p)?),
        _ => return Err(r.bad(format!("bad input shape {input:?}"))),
    };
    let conv = r.usize_field("conv_channels", 2)?;
    let diverter_width = r.usize_field("diverter_width", 1)?[0];
    let branch_hidden = r.usize_field("branch_hidden", 1)?[0];
    let input_scale = r.hex_field("input_scale")?;
    let target_shift = r.hex_field("target_shift")?;
    let target_scale = r.hex_field("target_scale")?;
    let seed = match r.field("seed")?.as_slice() {
        [s] => s.parse::<u64>().map_err(|_| r.bad(format!("bad seed `{s}`")))?,
        _ => return Err(r.bad("`seed` takes one value")),
    };
    let entries = r.usize_field("entries", 1)?[0];
    let config = CausalNetConfig {
        input,
        conv_channels: [conv[0], conv[1]],
        diverter_width,
        branch_hidden,
        input_scale,
        seed,
    };
    let mut model = build_causalnet(&config).map_err(|e| r.bad(e.to_string()))?;
    model.target_shift = target_shift;
    model.target_scale = target_scale;

    let expected = model.graph().params().count() + 2 * model.graph().norm_states().len();
    if entries != expected {
        return Err(r.bad(format!("{entries} entries declared, architecture has {expected}")));
    }
    let specs: Vec<(String, Vec<usize>)> = model
        .graph()
        .params()
        .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
        .collect();
    for (name, shape) in specs {
        let vals = r.entry("param", &name, &shape)?;
        let t = Tensor::new(shape, vals).map_err(|e| r.bad(format!("param `{name}`: {e}")))?;
        model.graph_mut().set_param(&name, t)?;
    }
    let norms: Vec<(String, usize)> = model
        .graph()
        .norm_states()
        .iter()
        .map(|s| (s.name.clone(), s.running_mean.len()))
        .collect();
    for (i, (name, width)) in norms.into_iter().enumerate() {
        let mean = r.entry("buffer", &format!("{name}.running_mean"), &[width])?;
        let var = r.entry("buffer", &format!("{name}.running_var"), &[width])?;
        let st = &mut model.graph_mut().norm_states_mut()[i];
        st.running_mean = mean;
        st.running_var = var;
    }
    if r.next("the `end` marker")? != "end" {
        return Err(r.bad("expected `end` after the last entry"));
    }
    Ok(model)
}

pub fn load_checkpoint(path: &Path) -> Result<CausalNet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text, &path.display().to_string())
}
