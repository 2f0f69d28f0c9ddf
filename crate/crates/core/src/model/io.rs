use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{ModelConfig, ModelError, NgcModel};
use crate::nn::{Layer, Mlp};

pub const MODEL_MAGIC: &[u8; 4] = b"NGCM";
pub const MODEL_VERSION: u32 = 1;

/// Layout (little-endian): magic, version `u32`, width `u32`, latent
/// dimension `u32`, frequency count `u32`, leaky slope `f64`, latent count
/// `u32`, 32-byte config hash, then `f32` blocks for MLP0, MLP1, g and h
/// (per layer: `in x out` weights row-major, then biases) and finally the
/// latent matrix row-major.
impl NgcModel<f32> {
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let c = self.config();
        w.write_all(MODEL_MAGIC)?;
        for v in [MODEL_VERSION, c.width as u32, c.latent_dim as u32, c.frequencies as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&c.slope.to_le_bytes())?;
        w.write_all(&(self.n_latents() as u32).to_le_bytes())?;
        w.write_all(self.config_hash())?;
        for mlp in self.mlps() {
            for t in mlp.tensors() {
                write_f32s(&mut w, t)?;
            }
        }
        write_f32s(&mut w, self.latents().as_slice().expect("contiguous"))?;
        w.flush()
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, ModelError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(ModelError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != MODEL_VERSION {
            return Err(ModelError::UnsupportedVersion(version));
        }
        let width = read_u32(&mut r)? as usize;
        let latent_dim = read_u32(&mut r)? as usize;
        let frequencies = read_u32(&mut r)? as usize;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let slope = f64::from_le_bytes(b8);
        let n_latents = read_u32(&mut r)? as usize;
        let mut hash = [0u8; 32];
        r.read_exact(&mut hash)?;
        let config = ModelConfig { width, latent_dim, frequencies, slope };
        // widths come from the header, so a corrupt header fails here rather than allocating wildly
        if width > 1 << 16 || latent_dim > 1 << 16 || frequencies > 64 || n_latents > 1 << 24 {
            return Err(ModelError::InvalidConfig(format!("implausible header {config:?}")));
        }
        let template = NgcModel::<f32>::new(config, 0, 0)?;
        let mut mlps = Vec::with_capacity(4);
        for mlp in template.mlps() {
            let mut layers = Vec::new();
            for l in mlp.layers() {
                let weight = Array2::from_shape_vec((l.inputs(), l.outputs()), read_f32s(&mut r, l.weight.len())?)
                    .expect("sized by header");
                let bias = Array1::from(read_f32s(&mut r, l.outputs())?);
                layers.push(Layer { weight, bias });
            }
            mlps.push(Mlp::from_layers(layers, slope as f32)?);
        }
        let latents = Array2::from_shape_vec((n_latents, latent_dim), read_f32s(&mut r, n_latents * latent_dim)?)
            .expect("sized by header");
        let mlps: [Mlp<f32>; 4] = mlps.try_into().expect("four networks");
        NgcModel::from_parts(config, mlps, latents, hash)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let f = File::create(path).map_err(ModelError::Io)?;
        self.write(BufWriter::new(f)).map_err(ModelError::Io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let f = File::open(path).map_err(ModelError::Io)?;
        Self::read(BufReader::new(f))
    }
}

fn write_f32s<W: Write>(w: &mut W, v: &[f32]) -> std::io::Result<()> {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    w.write_all(&bytes)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, ModelError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>, ModelError> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}
