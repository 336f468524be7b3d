//! Binary field snapshots.
//!
//! A file is a 32-byte ASCII header `STQGFLD1 nx ny lx ly`, padded with
//! spaces, followed by one to four records of `nx·ny` little-endian `f64`
//! values in row-major order: `b`, then `q`, `h` and `f`. Absent trailing
//! records are zero. Periods that are rational multiples of `π` are written
//! as `<c>pi` (for instance `2pi`) so the header stays within 32 bytes.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use crate::error::{Result, StqgError};
use crate::model::{ModelData, State};
use crate::noise::NoiseBasis;
use crate::torus::{Field, TorusSpec};

pub const MAGIC: &str = "STQGFLD1";
pub const HEADER_LEN: usize = 32;

fn bad(msg: impl Into<String>) -> StqgError {
    StqgError::Snapshot(msg.into())
}

fn format_length(l: f64) -> String {
    let c = l / PI;
    let short = format!("{c}");
    if short.len() <= 6 && (short.parse::<f64>().unwrap() * PI) == l {
        format!("{short}pi")
    } else {
        format!("{l}")
    }
}

fn parse_length(tok: &str) -> Result<f64> {
    let v = match tok.strip_suffix("pi") {
        Some(c) => c.parse::<f64>().map(|c| c * PI),
        None => tok.parse::<f64>(),
    };
    v.map_err(|_| bad(format!("bad period `{tok}`")))
}

pub fn header(spec: &TorusSpec) -> Result<[u8; HEADER_LEN]> {
    let text = format!(
        "{MAGIC} {} {} {} {}",
        spec.nx,
        spec.ny,
        format_length(spec.lx),
        format_length(spec.ly)
    );
    if text.len() > HEADER_LEN {
        return Err(bad(format!("header `{text}` longer than {HEADER_LEN} bytes")));
    }
    let mut out = [b' '; HEADER_LEN];
    out[..text.len()].copy_from_slice(text.as_bytes());
    Ok(out)
}

/// Fields of one snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub spec: TorusSpec,
    pub b: Field,
    pub q: Field,
    pub h: Field,
    pub f: Field,
}

impl Snapshot {
    pub fn of(state: &State, data: &ModelData) -> Self {
        Snapshot {
            spec: *state.spec(),
            b: state.b.clone(),
            q: state.q.clone(),
            h: data.h.clone(),
            f: data.f.clone(),
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let n = self.spec.len();
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * 8 * n);
        out.extend_from_slice(&header(&self.spec)?);
        for fld in [&self.b, &self.q, &self.h, &self.f] {
            for v in fld.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(bad("file shorter than the header"));
        }
        let text = std::str::from_utf8(&bytes[..HEADER_LEN]).map_err(|_| bad("header is not ASCII"))?;
        let toks: Vec<&str> = text.split_ascii_whitespace().collect();
        if toks.first() != Some(&MAGIC) {
            return Err(bad("missing STQGFLD1 magic"));
        }
        if toks.len() != 5 {
            return Err(bad(format!("header has {} tokens, expected 5", toks.len())));
        }
        let nx: usize = toks[1].parse().map_err(|_| bad(format!("bad nx `{}`", toks[1])))?;
        let ny: usize = toks[2].parse().map_err(|_| bad(format!("bad ny `{}`", toks[2])))?;
        let spec = TorusSpec::new(nx, ny, parse_length(toks[3])?, parse_length(toks[4])?)
            .map_err(|e| bad(format!("header: {e}")))?;
        let rec = 8 * spec.len();
        let body = &bytes[HEADER_LEN..];
        if body.is_empty() || !body.len().is_multiple_of(rec) || body.len() / rec > 4 {
            return Err(bad(format!(
                "payload of {} bytes is not 1 to 4 records of {rec} bytes",
                body.len()
            )));
        }
        let mut fields: Vec<Field> = body
            .chunks_exact(rec)
            .enumerate()
            .map(|(r, chunk)| {
                let vals = chunk
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect();
                Field::from_values(spec, vals).map_err(|e| bad(format!("record {r}: {e}")))
            })
            .collect::<Result<_>>()?;
        while fields.len() < 4 {
            fields.push(Field::zeros(spec));
        }
        let f = fields.pop().expect("four records");
        let h = fields.pop().expect("four records");
        let q = fields.pop().expect("four records");
        let b = fields.pop().expect("four records");
        Ok(Snapshot { spec, b, q, h, f })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }

    /// Model data (without noise) and state described by the snapshot.
    pub fn restore(&self) -> Result<(State, ModelData)> {
        let data = ModelData::new(self.h.clone(), self.f.clone(), NoiseBasis::empty(self.spec))?;
        let state = data.state(self.b.clone(), self.q.clone(), 0.0)?;
        Ok((state, data))
    }
}
