//! The `SSDR` tensor container.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic "SSDR" | version u32 = 1 | tensor_count u32
//! repeated: name_len u32 | name utf-8 | ndim u32 | dims u64 × ndim | f32 × Πdims
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::params::ParamStore;
use crate::network::spec::NetworkSpec;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"SSDR";
pub const VERSION: u32 = 1;

/// Writes named tensors in the given order.
pub fn write_container<'a, I>(path: &Path, tensors: I) -> Result<()>
where
    I: IntoIterator<Item = (&'a str, &'a Tensor)>,
{
    let tensors: Vec<_> = tensors.into_iter().collect();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> io::Result<()> {
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.rank() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    };
    body().map_err(|e| Error::io(path, e))
}

struct Reader<'p, R> {
    inner: R,
    path: &'p Path,
}

impl<R: Read> Reader<'_, R> {
    fn bytes<const N: usize>(&mut self, context: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.fill(&mut buf, context)?;
        Ok(buf)
    }

    fn fill(&mut self, buf: &mut [u8], context: &str) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::Truncated {
                path: self.path.to_path_buf(),
                context: context.to_string(),
            },
            _ => Error::io(self.path, e),
        })
    }

    fn u32(&mut self, context: &str) -> Result<u32> {
        self.bytes::<4>(context).map(u32::from_le_bytes)
    }

    fn u64(&mut self, context: &str) -> Result<u64> {
        self.bytes::<8>(context).map(u64::from_le_bytes)
    }
}

fn malformed(path: &Path, message: String) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        message,
    }
}

/// Reads every tensor in file order.
pub fn read_container(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        inner: BufReader::new(file),
        path,
    };
    let magic = r.bytes::<4>("magic")?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found: magic,
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            version,
        });
    }
    let count = r.u32("tensor count")?;
    let mut out = Vec::with_capacity(count as usize);
    for i in 0..count {
        let ctx = format!("tensor {i}");
        let name_len = r.u32(&ctx)? as usize;
        let mut name = vec![0u8; name_len];
        r.fill(&mut name, &ctx)?;
        let name = String::from_utf8(name)
            .map_err(|_| malformed(path, format!("tensor {i}: name is not UTF-8")))?;
        let ctx = format!("tensor `{name}`");
        let ndim = r.u32(&ctx)? as usize;
        if !(1..=4).contains(&ndim) {
            return Err(malformed(path, format!("{ctx}: rank {ndim} outside 1..=4")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64(&ctx)? as usize);
        }
        let len: usize = shape.iter().product();
        let mut raw = vec![0u8; len * 4];
        r.fill(&mut raw, &ctx)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let t = Tensor::new(&shape, data).map_err(|e| malformed(path, format!("{ctx}: {e}")))?;
        out.push((name, t));
    }
    Ok(out)
}

/// Saves every tensor of `params` (values only) in store order.
pub fn save_weights(params: &ParamStore, path: &Path) -> Result<()> {
    write_container(path, params.iter().map(|(n, p)| (n, &p.value)))
}

/// Loads a container and validates it against `spec`.
///
/// Parameters come back trainable; buffers (running statistics) are flagged.
pub fn load_weights(path: &Path, spec: &NetworkSpec) -> Result<ParamStore> {
    let table = spec.param_table();
    let mut store = ParamStore::new();
    for (name, tensor) in read_container(path)? {
        let Some((_, shape, buffer)) = table.iter().find(|(n, _, _)| *n == name) else {
            return Err(Error::UnknownTensor(name));
        };
        if tensor.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch {
                name,
                expected: shape.clone(),
                found: tensor.shape().to_vec(),
            });
        }
        store.insert(name, tensor, true, *buffer);
    }
    // reorder to layer order and report anything absent
    store.subset(spec)
}
