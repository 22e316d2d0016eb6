//! Binary parameter snapshots.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic       8 bytes   "MLPSNAP1"
//! n_sizes     u32       number of layer-size entries (depth + 1)
//! sizes       n_sizes x u64
//! hidden_act  u8        0 = ReLU (the only hidden activation)
//! output_act  u8        1 = tanh, 2 = identity
//! per layer, in order:
//!   weights   (out x in) f64, row-major
//!   bias      out f64
//! ```
//!
//! f64 bits are written verbatim, so save/load round-trips bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::mlp::{Mlp, OutputActivation};

const MAGIC: &[u8; 8] = b"MLPSNAP1";
const HIDDEN_RELU: u8 = 0;

pub fn save(net: &Mlp, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>, bytes: &[u8]| -> Result<()> {
        w.write_all(bytes).map_err(|e| Error::io(path, e))
    };

    write(&mut w, MAGIC)?;
    let sizes = net.layer_sizes();
    write(&mut w, &(sizes.len() as u32).to_le_bytes())?;
    for &s in sizes {
        write(&mut w, &(s as u64).to_le_bytes())?;
    }
    write(&mut w, &[HIDDEN_RELU, net.output_activation().tag()])?;
    for tensor in net.param_tensors() {
        for &v in tensor.data() {
            write(&mut w, &v.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Mlp> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 8];
    read_exact(&mut r, path, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse(format!(
            "{} is not a parameter snapshot (bad magic)",
            path.display()
        )));
    }

    let n_sizes = read_u32(&mut r, path)? as usize;
    if !(2..=64).contains(&n_sizes) {
        return Err(Error::Parse(format!("implausible layer count {n_sizes}")));
    }
    let mut sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        sizes.push(read_u64(&mut r, path)? as usize);
    }

    let mut acts = [0u8; 2];
    read_exact(&mut r, path, &mut acts)?;
    if acts[0] != HIDDEN_RELU {
        return Err(Error::Parse(format!("unknown hidden activation tag {}", acts[0])));
    }
    let output_activation = OutputActivation::from_tag(acts[1])?;

    let mut net = Mlp::zeroed(&sizes, output_activation)?;
    for tensor in net.param_tensors_mut() {
        for v in tensor.data_mut() {
            *v = read_f64(&mut r, path)?;
        }
    }

    // The stream must be fully consumed; trailing bytes mean a format error.
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => {
            return Err(Error::Parse(format!(
                "trailing bytes in snapshot {}",
                path.display()
            )))
        }
        Err(e) => return Err(Error::io(path, e)),
    }
    if !net.params_finite() {
        return Err(Error::Parse(format!(
            "snapshot {} contains non-finite parameters",
            path.display()
        )));
    }
    Ok(net)
}

fn read_exact(r: &mut impl Read, path: &Path, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| Error::io(path, e))
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, path, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read, path: &Path) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact(r, path, &mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read, path: &Path) -> Result<f64> {
    let mut buf = [0u8; 8];
    read_exact(r, path, &mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, Stream};

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.mlp");
        let mut rng = derive(77, Stream::Init);
        let net = Mlp::new(&[5, 16, 16, 3], OutputActivation::Tanh, &mut rng).unwrap();
        save(&net, &path).unwrap();
        let loaded = load(&path).unwrap();
        assert!(loaded.same_architecture(&net));
        for (a, b) in loaded.param_tensors().iter().zip(net.param_tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn rejects_corrupt_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.mlp");
        std::fs::write(&path, b"NOTASNAPxxxxxxxxxxxx").unwrap();
        assert!(matches!(load(&path), Err(Error::Parse(_))));
    }

    #[test]
    fn rejects_truncated_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.mlp");
        let net = Mlp::zeroed(&[3, 4, 1], OutputActivation::Identity).unwrap();
        save(&net, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load(&path), Err(Error::Io { .. })));
    }
}
