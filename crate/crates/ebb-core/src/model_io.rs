//! Binary model files: a tagged, versioned, little-endian record that
//! roundtrips every float bit-exactly.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::svm::{SvmModel, TrainingDiagnostics};

const MAGIC: &[u8; 4] = b"EBBM";
const VERSION: u32 = 1;

pub fn model_to_bytes(model: &SvmModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 + 8 * (4 + model.weights.len()) + 17);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&model.cost.to_le_bytes());
    out.extend_from_slice(&model.intercept.to_le_bytes());
    out.extend_from_slice(&(model.weights.len() as u64).to_le_bytes());
    for w in &model.weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out.extend_from_slice(&model.diagnostics.iterations.to_le_bytes());
    out.extend_from_slice(&model.diagnostics.kkt_violation.to_le_bytes());
    out.push(u8::from(model.diagnostics.converged));
    out.extend_from_slice(&model.diagnostics.dual_objective.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(Error::ModelFormat {
                path: self.path.into(),
                message: "truncated file".into(),
            });
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn model_from_bytes(bytes: &[u8], path: &str) -> Result<SvmModel> {
    let mut r = Reader { bytes, at: 0, path };
    if r.take(4)? != MAGIC {
        return Err(Error::ModelFormat {
            path: path.into(),
            message: "not a model file (bad magic)".into(),
        });
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::ModelFormat {
            path: path.into(),
            message: format!("unsupported version {version}, expected {VERSION}"),
        });
    }
    let cost = r.f64()?;
    let intercept = r.f64()?;
    let n = r.u64()? as usize;
    // Guard against absurd counts before allocating.
    if n > bytes.len() / 8 {
        return Err(Error::ModelFormat {
            path: path.into(),
            message: format!("weight count {n} exceeds file size"),
        });
    }
    let mut weights = Vec::with_capacity(n);
    for _ in 0..n {
        weights.push(r.f64()?);
    }
    let iterations = r.u64()?;
    let kkt_violation = r.f64()?;
    let converged = match r.take(1)?[0] {
        0 => false,
        1 => true,
        other => {
            return Err(Error::ModelFormat {
                path: path.into(),
                message: format!("bad convergence flag {other}"),
            })
        }
    };
    let dual_objective = r.f64()?;
    if r.at != bytes.len() {
        return Err(Error::ModelFormat {
            path: path.into(),
            message: format!("{} trailing bytes", bytes.len() - r.at),
        });
    }
    Ok(SvmModel {
        weights,
        intercept,
        cost,
        diagnostics: TrainingDiagnostics {
            iterations,
            kkt_violation,
            converged,
            dual_objective,
        },
    })
}

pub fn write_model(path: &Path, model: &SvmModel) -> Result<()> {
    let bytes = model_to_bytes(model);
    let mut file =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    file.write_all(&bytes)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_model(path: &Path) -> Result<SvmModel> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    model_from_bytes(&bytes, &path.display().to_string())
}
