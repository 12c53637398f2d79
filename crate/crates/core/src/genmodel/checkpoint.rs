//! The LGEN container, shared by generator, classifier and optimizer-state
//! checkpoints.
//!
//! | field        | type        | notes                                        |
//! |--------------|-------------|----------------------------------------------|
//! | magic        | `b"LGEN"`   |                                              |
//! | version      | u16         | currently 1                                  |
//! | kind         | u8          | see [`ContainerKind`]                        |
//! | latent_dim   | u32         | 0 for non-generator containers               |
//! | desc_len     | u32         | byte length of the description               |
//! | description  | UTF-8 JSON  | architecture and scalar settings             |
//! | n_values     | u64         |                                              |
//! | payload      | f64 × n     | parameters in the order the description sets |
//!
//! Integers and floats are little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnalyticModel, Body, Generator};
use crate::codec::{put_f64s, put_u16, put_u32, put_u64, Reader};
use crate::data::SampleKind;
use crate::error::{Error, Result};
use crate::numkit::{Architecture, NetworkParams};

pub const LGEN_MAGIC: [u8; 4] = *b"LGEN";
pub const LGEN_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContainerKind {
    Vae = 0,
    Gan = 1,
    Analytic = 2,
    Classifier = 3,
    OptimizerState = 4,
}

impl ContainerKind {
    fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => ContainerKind::Vae,
            1 => ContainerKind::Gan,
            2 => ContainerKind::Analytic,
            3 => ContainerKind::Classifier,
            4 => ContainerKind::OptimizerState,
            t => return Err(Error::BadShape(format!("unknown LGEN kind tag {t}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: ContainerKind,
    pub latent_dim: u32,
    pub description: String,
    pub payload: Vec<f64>,
}

pub fn write_container(c: &Container) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + c.description.len() + 8 * c.payload.len());
    out.extend_from_slice(&LGEN_MAGIC);
    put_u16(&mut out, LGEN_VERSION);
    out.push(c.kind as u8);
    put_u32(&mut out, c.latent_dim);
    put_u32(&mut out, c.description.len() as u32);
    out.extend_from_slice(c.description.as_bytes());
    put_u64(&mut out, c.payload.len() as u64);
    put_f64s(&mut out, &c.payload);
    out
}

pub fn read_container(bytes: &[u8]) -> Result<Container> {
    let mut r = Reader::new(bytes, "LGEN");
    r.magic(LGEN_MAGIC)?;
    let version = r.u16()?;
    if version != LGEN_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let kind = ContainerKind::from_tag(r.u8()?)?;
    let latent_dim = r.u32()?;
    let desc_len = r.u32()? as usize;
    let description = String::from_utf8(r.take(desc_len)?.to_vec())
        .map_err(|_| Error::BadShape("description block is not UTF-8".into()))?;
    let n = usize::try_from(r.u64()?).map_err(|_| Error::BadShape("payload length overflow".into()))?;
    let payload = r.f64s(n)?;
    if r.remaining() != 0 {
        return Err(Error::BadShape(format!("{} trailing bytes after payload", r.remaining())));
    }
    Ok(Container { kind, latent_dim, description, payload })
}

#[derive(Serialize, Deserialize)]
struct GeneratorDescription {
    sample_kind: SampleKind,
    sample_shape: Vec<usize>,
    eps_dist: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    encoder: Option<Architecture>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    decoder: Option<Architecture>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    analytic: Option<AnalyticLayout>,
}

#[derive(Serialize, Deserialize)]
struct AnalyticLayout {
    n_classes: usize,
    out_dim: usize,
    r_class: f64,
    affine: bool,
}

fn take<'a>(payload: &mut &'a [f64], n: usize) -> Result<&'a [f64]> {
    if payload.len() < n {
        return Err(Error::TruncatedFile(format!("payload holds {} values, needed {n}", payload.len())));
    }
    let (head, tail) = payload.split_at(n);
    *payload = tail;
    Ok(head)
}

impl Generator {
    pub fn to_container(&self) -> Container {
        let mut desc = GeneratorDescription {
            sample_kind: self.sample_kind,
            sample_shape: self.sample_shape.clone(),
            eps_dist: self.eps_dist,
            encoder: None,
            decoder: None,
            analytic: None,
        };
        let mut payload = Vec::new();
        let kind = match &self.body {
            Body::Vae { encoder, decoder } => {
                desc.encoder = Some(encoder.arch.clone());
                desc.decoder = Some(decoder.arch.clone());
                payload.extend(encoder.flatten());
                payload.extend(decoder.flatten());
                ContainerKind::Vae
            }
            Body::Gan { decoder } => {
                desc.decoder = Some(decoder.arch.clone());
                payload.extend(decoder.flatten());
                ContainerKind::Gan
            }
            Body::Analytic(m) => {
                desc.analytic = Some(AnalyticLayout {
                    n_classes: m.centers.len(),
                    out_dim: m.out_dim,
                    r_class: m.r_class,
                    affine: m.weight.is_some(),
                });
                m.centers.iter().for_each(|c| payload.extend_from_slice(c));
                if let Some(w) = &m.weight {
                    payload.extend_from_slice(w);
                }
                payload.extend_from_slice(&m.bias);
                ContainerKind::Analytic
            }
        };
        Container {
            kind,
            latent_dim: self.latent_dim as u32,
            description: serde_json::to_string(&desc).expect("description serialises"),
            payload,
        }
    }

    pub fn from_container(c: &Container) -> Result<Generator> {
        let desc: GeneratorDescription = serde_json::from_str(&c.description)?;
        let latent_dim = c.latent_dim as usize;
        let mut rest = c.payload.as_slice();
        let net = |arch: Option<Architecture>, rest: &mut &[f64]| -> Result<NetworkParams> {
            let arch = arch.ok_or_else(|| Error::BadShape("missing network architecture".into()))?;
            let n = arch.param_count();
            NetworkParams::from_flat(arch, take(rest, n)?).map_err(|e| Error::BadShape(e.to_string()))
        };
        let body = match c.kind {
            ContainerKind::Vae => {
                let encoder = net(desc.encoder, &mut rest)?;
                let decoder = net(desc.decoder, &mut rest)?;
                Body::Vae { encoder, decoder }
            }
            ContainerKind::Gan => Body::Gan { decoder: net(desc.decoder, &mut rest)? },
            ContainerKind::Analytic => {
                let layout = desc.analytic.ok_or_else(|| Error::BadShape("missing analytic layout".into()))?;
                let centers = (0..layout.n_classes)
                    .map(|_| take(&mut rest, latent_dim).map(<[f64]>::to_vec))
                    .collect::<Result<Vec<_>>>()?;
                let weight =
                    if layout.affine { Some(take(&mut rest, layout.out_dim * latent_dim)?.to_vec()) } else { None };
                let bias = take(&mut rest, layout.out_dim)?.to_vec();
                Body::Analytic(AnalyticModel {
                    centers,
                    r_class: layout.r_class,
                    out_dim: layout.out_dim,
                    weight,
                    bias,
                })
            }
            other => return Err(Error::BadShape(format!("{other:?} container is not a generator"))),
        };
        if !rest.is_empty() {
            return Err(Error::BadShape(format!("{} unused payload values", rest.len())));
        }
        let mut gen = Generator::from_body(desc.sample_kind, desc.sample_shape, latent_dim, body);
        gen.eps_dist = desc.eps_dist;
        Ok(gen)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, write_container(&self.to_container()))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Generator> {
        Generator::from_container(&read_container(&fs::read(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genmodel::{make_analytic_generator, AnalyticGenConfig, OutputMap};
    use crate::rng::from_seed;

    #[test]
    fn container_round_trip() {
        let c = Container {
            kind: ContainerKind::Classifier,
            latent_dim: 0,
            description: "{\"a\":1}".into(),
            payload: vec![1.0, -0.0, f64::MIN_POSITIVE, 3.5e300],
        };
        let bytes = write_container(&c);
        assert_eq!(read_container(&bytes).unwrap(), c);
        assert!(matches!(read_container(&bytes[..bytes.len() - 1]), Err(Error::TruncatedFile(_))));
        let mut bad = bytes.clone();
        bad[3] = b'X';
        assert!(matches!(read_container(&bad), Err(Error::BadMagic { .. })));
        let mut v2 = bytes;
        v2[4] = 2;
        assert!(matches!(read_container(&v2), Err(Error::UnsupportedVersion(2))));
    }

    #[test]
    fn analytic_round_trip() {
        let cfg =
            AnalyticGenConfig::sphere(4, 5, 5, 10.0, 5.0, 1.0, OutputMap::Random { out_dim: 7 }, &mut from_seed(1))
                .unwrap();
        let mut g = make_analytic_generator(&cfg, &mut from_seed(2)).unwrap();
        g.set_eps_dist(0.1 + 0.2);
        let back = Generator::from_container(&read_container(&write_container(&g.to_container())).unwrap()).unwrap();
        assert_eq!(back, g);
    }
}
