//! Versioned binary checkpoints.
//!
//! Layout: `b"SPKC"`, `u32` version, payload, `u32` CRC-32 of everything
//! before it. All integers and floats are little-endian; floats are stored
//! as raw bits so a save/load cycle is exact.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::codec::{BigramModel, LabelAssignment};
use crate::error::{Error, Result};
use crate::harness::TrainProgress;
use crate::io::config::{parse_network_config, RunConfig};
use crate::network::Network;
use crate::CLASSES;

pub const MAGIC: &[u8; 4] = b"SPKC";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct PathwayState {
    pub post_offsets: Vec<u32>,
    pub pre_index: Vec<u32>,
    pub weights: Vec<f64>,
    pub theta: Vec<f64>,
    pub alive: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageState {
    pub w_p: Option<f64>,
    pub pathways: Vec<PathwayState>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub progress: TrainProgress,
    pub lambda: f64,
    pub stages: Vec<StageState>,
    pub labels: Option<LabelAssignment>,
    pub bigram: Option<BigramModel>,
}

impl Checkpoint {
    pub fn capture(
        config: &RunConfig,
        net: &Network,
        progress: &TrainProgress,
        labels: Option<&LabelAssignment>,
        bigram: Option<&BigramModel>,
    ) -> Self {
        let stages = net
            .stages
            .iter()
            .map(|st| StageState {
                w_p: st.pra.as_ref().map(|p| p.w_p),
                pathways: st
                    .module
                    .pathways
                    .iter()
                    .map(|p| {
                        let (o, i, w) = p.feedforward.csr();
                        PathwayState {
                            post_offsets: o.to_vec(),
                            pre_index: i.to_vec(),
                            weights: w.to_vec(),
                            theta: p.neurons.theta.clone(),
                            alive: p.neurons.alive_mask().to_vec(),
                        }
                    })
                    .collect(),
            })
            .collect();
        Self {
            config: config.clone(),
            progress: progress.clone(),
            lambda: net.encoder.lambda,
            stages,
            labels: labels.cloned(),
            bigram: bigram.cloned(),
        }
    }

    /// Rebuilds the network exactly as captured.
    pub fn network(&self) -> Result<Network> {
        let mut net = Network::build(
            self.config.network.clone(),
            self.config.sim.clone(),
            self.config.train.seed,
        )?;
        if net.stages.len() != self.stages.len() {
            return Err(Error::Checkpoint("stage count does not match the network".into()));
        }
        net.encoder.lambda = self.lambda;
        for (st, saved) in net.stages.iter_mut().zip(&self.stages) {
            match (&mut st.pra, saved.w_p) {
                (Some(p), Some(w)) => p.w_p = w,
                (None, None) => {}
                _ => return Err(Error::Checkpoint("PRA layout does not match the network".into())),
            }
            if st.module.pathways.len() != saved.pathways.len() {
                return Err(Error::Checkpoint("pathway count does not match the network".into()));
            }
            for (p, s) in st.module.pathways.iter_mut().zip(&saved.pathways) {
                p.feedforward
                    .set_csr(s.post_offsets.clone(), s.pre_index.clone(), s.weights.clone())?;
                if s.theta.len() != p.neurons.len() {
                    return Err(Error::Checkpoint("threshold array has the wrong length".into()));
                }
                p.neurons.theta.copy_from_slice(&s.theta);
                p.neurons.set_alive_mask(&s.alive)?;
            }
        }
        Ok(net)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        w.write_u32::<LE>(VERSION).unwrap();
        put_bytes(&mut w, self.config.to_json().as_bytes());
        let p = &self.progress;
        for v in [p.stage, p.done, p.iteration] {
            w.write_u64::<LE>(v as u64).unwrap();
        }
        w.write_u64::<LE>(p.retries).unwrap();
        w.write_u64::<LE>(p.saturated).unwrap();
        w.write_f64::<LE>(self.lambda).unwrap();
        w.write_u64::<LE>(self.stages.len() as u64).unwrap();
        for s in &self.stages {
            w.write_u8(s.w_p.is_some() as u8).unwrap();
            w.write_f64::<LE>(s.w_p.unwrap_or(0.0)).unwrap();
            w.write_u64::<LE>(s.pathways.len() as u64).unwrap();
            for p in &s.pathways {
                put_u32s(&mut w, &p.post_offsets);
                put_u32s(&mut w, &p.pre_index);
                put_f64s(&mut w, &p.weights);
                put_f64s(&mut w, &p.theta);
                put_bools(&mut w, &p.alive);
            }
        }
        match &self.labels {
            None => w.write_u8(0).unwrap(),
            Some(la) => {
                w.write_u8(1).unwrap();
                let flat: Vec<f64> = la.response.iter().flatten().copied().collect();
                put_f64s(&mut w, &flat);
                put_bytes(&mut w, &la.labels);
                put_bools(&mut w, &la.silent);
                put_bools(&mut w, &la.excluded);
            }
        }
        match &self.bigram {
            None => w.write_u8(0).unwrap(),
            Some(b) => {
                w.write_u8(1).unwrap();
                w.write_u64::<LE>(b.table.len() as u64).unwrap();
                for (&(a, c), h) in &b.table {
                    w.write_u32::<LE>(a).unwrap();
                    w.write_u32::<LE>(c).unwrap();
                    for &k in h {
                        w.write_u32::<LE>(k).unwrap();
                    }
                }
            }
        }
        let crc = crc32fast::hash(&w);
        w.write_u32::<LE>(crc).unwrap();
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {version} is not supported (this build reads version {VERSION})"
            )));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(Error::Checkpoint("checksum mismatch (file truncated or corrupted)".into()));
        }
        let mut r = Cursor::new(&body[8..]);
        let cp = read_payload(&mut r).map_err(|e| match e {
            Error::Io(io) => Error::Checkpoint(format!("malformed payload: {io}")),
            other => other,
        })?;
        if (r.position() as usize) != body.len() - 8 {
            return Err(Error::Checkpoint("trailing bytes in payload".into()));
        }
        Ok(cp)
    }
}

fn read_payload(r: &mut Cursor<&[u8]>) -> Result<Checkpoint> {
    let cfg_bytes = get_bytes(r)?;
    let text = String::from_utf8(cfg_bytes)
        .map_err(|_| Error::Checkpoint("configuration is not UTF-8".into()))?;
    let config = parse_network_config(&text)?;
    let progress = TrainProgress {
        stage: r.read_u64::<LE>()? as usize,
        done: r.read_u64::<LE>()? as usize,
        iteration: r.read_u64::<LE>()? as usize,
        retries: r.read_u64::<LE>()?,
        saturated: r.read_u64::<LE>()?,
    };
    let lambda = r.read_f64::<LE>()?;
    let n_stages = get_len(r)?;
    let mut stages = Vec::with_capacity(n_stages.min(64));
    for _ in 0..n_stages {
        let has = r.read_u8()? != 0;
        let w = r.read_f64::<LE>()?;
        let n_p = get_len(r)?;
        let mut pathways = Vec::with_capacity(n_p.min(64));
        for _ in 0..n_p {
            pathways.push(PathwayState {
                post_offsets: get_u32s(r)?,
                pre_index: get_u32s(r)?,
                weights: get_f64s(r)?,
                theta: get_f64s(r)?,
                alive: get_bools(r)?,
            });
        }
        stages.push(StageState {
            w_p: has.then_some(w),
            pathways,
        });
    }
    let labels = if r.read_u8()? != 0 {
        let flat = get_f64s(r)?;
        if flat.len() % CLASSES != 0 {
            return Err(Error::Checkpoint("response matrix is not n x 10".into()));
        }
        let response = flat
            .chunks(CLASSES)
            .map(|c| c.try_into().unwrap())
            .collect();
        Some(LabelAssignment {
            response,
            labels: get_bytes(r)?,
            silent: get_bools(r)?,
            excluded: get_bools(r)?,
        })
    } else {
        None
    };
    let bigram = if r.read_u8()? != 0 {
        let n = get_len(r)?;
        let mut b = BigramModel::default();
        for _ in 0..n {
            let a = r.read_u32::<LE>()?;
            let c = r.read_u32::<LE>()?;
            let mut h = [0u32; CLASSES];
            for k in &mut h {
                *k = r.read_u32::<LE>()?;
            }
            b.table.insert((a, c), h);
        }
        Some(b)
    } else {
        None
    };
    Ok(Checkpoint {
        config,
        progress,
        lambda,
        stages,
        labels,
        bigram,
    })
}

pub fn save_checkpoint(path: &Path, cp: &Checkpoint) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, cp.to_bytes())?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

fn put_bytes(w: &mut Vec<u8>, b: &[u8]) {
    w.write_u64::<LE>(b.len() as u64).unwrap();
    w.extend_from_slice(b);
}

fn put_u32s(w: &mut Vec<u8>, v: &[u32]) {
    w.write_u64::<LE>(v.len() as u64).unwrap();
    for &x in v {
        w.write_u32::<LE>(x).unwrap();
    }
}

fn put_f64s(w: &mut Vec<u8>, v: &[f64]) {
    w.write_u64::<LE>(v.len() as u64).unwrap();
    for &x in v {
        w.write_u64::<LE>(x.to_bits()).unwrap();
    }
}

fn put_bools(w: &mut Vec<u8>, v: &[bool]) {
    w.write_u64::<LE>(v.len() as u64).unwrap();
    w.extend(v.iter().map(|&b| b as u8));
}

/// Reads a length prefix, refusing lengths longer than the remaining input.
fn get_len(r: &mut Cursor<&[u8]>) -> Result<usize> {
    let n = r.read_u64::<LE>()? as usize;
    let left = r.get_ref().len() - r.position() as usize;
    if n > left {
        return Err(Error::Checkpoint(format!("length {n} exceeds remaining {left} bytes")));
    }
    Ok(n)
}

fn get_bytes(r: &mut Cursor<&[u8]>) -> Result<Vec<u8>> {
    let n = get_len(r)?;
    let mut v = vec![0; n];
    r.read_exact(&mut v)?;
    Ok(v)
}

fn get_u32s(r: &mut Cursor<&[u8]>) -> Result<Vec<u32>> {
    let n = get_len(r)?;
    (0..n).map(|_| Ok(r.read_u32::<LE>()?)).collect()
}

fn get_f64s(r: &mut Cursor<&[u8]>) -> Result<Vec<f64>> {
    let n = get_len(r)?;
    (0..n)
        .map(|_| Ok(f64::from_bits(r.read_u64::<LE>()?)))
        .collect()
}

fn get_bools(r: &mut Cursor<&[u8]>) -> Result<Vec<bool>> {
    Ok(get_bytes(r)?.into_iter().map(|b| b != 0).collect())
}
