//! Binary checkpoint container, little-endian throughout:
//!
//! ```text
//! magic "SYMHCKPT" | version u32
//! config: u64 byte length + JSON of TrainingConfig
//! epoch u64 | adam_step u64
//! rng: seed [u8; 32] | stream u64 | word_pos u128
//! history: u64 count, then per epoch: epoch u64, lr, train_loss, val_loss, val_IoU, val_SMS as f64
//! best: u8 flag; if 1: epoch u64 | val_loss f64 | params group | buffers group
//! params group | buffers group | adam_m group | adam_v group
//! group: u64 count, then per tensor: u32 name length, UTF-8 name, rows u64, cols u64, rows·cols f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{BestModel, EpochRecord, TrainState, TrainingConfig};
use crate::error::{Error, Result};
use crate::model::ParamStore;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SYMHCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

type Named = Vec<(String, Array2<f64>)>;

fn write_group(w: &mut impl Write, tensors: &[(String, Array2<f64>)]) -> std::io::Result<()> {
    w.write_u64::<LE>(tensors.len() as u64)?;
    for (name, t) in tensors {
        w.write_u32::<LE>(name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        w.write_u64::<LE>(t.nrows() as u64)?;
        w.write_u64::<LE>(t.ncols() as u64)?;
        for v in t.iter() {
            w.write_f64::<LE>(*v)?;
        }
    }
    Ok(())
}

fn read_group(r: &mut impl Read) -> std::io::Result<Named> {
    let n = r.read_u64::<LE>()? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let len = r.read_u32::<LE>()? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        let rows = r.read_u64::<LE>()? as usize;
        let cols = r.read_u64::<LE>()? as usize;
        let mut data = vec![0.0; rows * cols];
        r.read_f64_into::<LE>(&mut data)?;
        let t = Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        out.push((name, t));
    }
    Ok(out)
}

fn with_names(store: &ParamStore, values: &[Array2<f64>]) -> Named {
    store.params().iter().zip(values).map(|((n, _), v)| (n.clone(), v.clone())).collect()
}

fn restore(target: &mut [Array2<f64>], layout: &ParamStore, group: Named, what: &str) -> Result<()> {
    if group.len() != target.len() {
        return Err(Error::Checkpoint(format!("{what}: expected {} tensors, found {}", target.len(), group.len())));
    }
    for ((slot, (name, _)), (gname, t)) in target.iter_mut().zip(layout.params()).zip(group) {
        if *name != gname || slot.dim() != t.dim() {
            return Err(Error::Checkpoint(format!("{what}: tensor {gname} does not match {name}")));
        }
        *slot = t;
    }
    Ok(())
}

fn store_from(layout: &ParamStore, params: Named, buffers: Named) -> Result<ParamStore> {
    let mut store = ParamStore::default();
    for (n, t) in params {
        store.add(&n, t);
    }
    for (n, t) in buffers {
        store.add_buffer(&n, t);
    }
    let mut out = layout.clone();
    out.load_from(&store).map_err(Error::Checkpoint)?;
    Ok(out)
}

impl TrainState {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_u32::<LE>(CHECKPOINT_VERSION)?;
        let cfg = serde_json::to_vec(&self.cfg).map_err(std::io::Error::other)?;
        w.write_u64::<LE>(cfg.len() as u64)?;
        w.write_all(&cfg)?;
        w.write_u64::<LE>(self.epoch as u64)?;
        w.write_u64::<LE>(self.adam_step)?;
        w.write_all(&self.rng.get_seed())?;
        w.write_u64::<LE>(self.rng.get_stream())?;
        w.write_u128::<LE>(self.rng.get_word_pos())?;
        w.write_u64::<LE>(self.history.len() as u64)?;
        for h in &self.history {
            w.write_u64::<LE>(h.epoch as u64)?;
            for v in [h.lr, h.train_loss, h.val_loss, h.val_iou, h.val_sms] {
                w.write_f64::<LE>(v)?;
            }
        }
        match &self.best {
            Some(b) => {
                w.write_u8(1)?;
                w.write_u64::<LE>(b.epoch as u64)?;
                w.write_f64::<LE>(b.val_loss)?;
                write_group(w, b.store.params())?;
                write_group(w, b.store.buffers())?;
            }
            None => w.write_u8(0)?,
        }
        let store = &self.model.store;
        write_group(w, store.params())?;
        write_group(w, store.buffers())?;
        write_group(w, &with_names(store, &self.adam_m))?;
        write_group(w, &with_names(store, &self.adam_v))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        Self::read_from(&mut r).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    fn read_from(r: &mut impl Read) -> Result<Self> {
        let io = |e: std::io::Error| Error::io("<checkpoint>", e);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = r.read_u32::<LE>().map_err(io)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let len = r.read_u64::<LE>().map_err(io)? as usize;
        let mut cfg = vec![0u8; len];
        r.read_exact(&mut cfg).map_err(io)?;
        let cfg: TrainingConfig =
            serde_json::from_slice(&cfg).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
        let mut state = TrainState::new(cfg)?;
        state.epoch = r.read_u64::<LE>().map_err(io)? as usize;
        state.adam_step = r.read_u64::<LE>().map_err(io)?;
        let mut seed = [0u8; 32];
        r.read_exact(&mut seed).map_err(io)?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(r.read_u64::<LE>().map_err(io)?);
        rng.set_word_pos(r.read_u128::<LE>().map_err(io)?);
        state.rng = rng;
        let n = r.read_u64::<LE>().map_err(io)? as usize;
        for _ in 0..n {
            let epoch = r.read_u64::<LE>().map_err(io)? as usize;
            let mut v = [0.0; 5];
            r.read_f64_into::<LE>(&mut v).map_err(io)?;
            state.history.push(EpochRecord {
                epoch,
                lr: v[0],
                train_loss: v[1],
                val_loss: v[2],
                val_iou: v[3],
                val_sms: v[4],
            });
        }
        let layout = state.model.store.clone();
        if r.read_u8().map_err(io)? == 1 {
            let epoch = r.read_u64::<LE>().map_err(io)? as usize;
            let val_loss = r.read_f64::<LE>().map_err(io)?;
            let params = read_group(r).map_err(io)?;
            let buffers = read_group(r).map_err(io)?;
            state.best = Some(BestModel { epoch, val_loss, store: store_from(&layout, params, buffers)? });
        }
        let params = read_group(r).map_err(io)?;
        let buffers = read_group(r).map_err(io)?;
        state.model.store = store_from(&layout, params, buffers)?;
        restore(&mut state.adam_m, &layout, read_group(r).map_err(io)?, "adam_m")?;
        restore(&mut state.adam_v, &layout, read_group(r).map_err(io)?, "adam_v")?;
        Ok(state)
    }
}
