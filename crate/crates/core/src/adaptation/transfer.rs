use ndarray::Array2;

use crate::error::{Error, Result};
use crate::lstm::{LstmConfig, LstmRegressor};
use crate::nn::{Checkpoint, ModelKind, ParamSet};
use crate::seq2seq::{Seq2Seq, Seq2SeqConfig};
use crate::text::{PhonemeInventory, EOS, POSITIONAL_FEATURES, SIL, WB};

/// Inventory recorded in the checkpoint metadata, if any.
pub fn checkpoint_inventory(ckpt: &Checkpoint) -> Result<Option<PhonemeInventory>> {
    match ckpt.metadata.get("inventory") {
        Some(v) => Ok(Some(serde_json::from_value(v.clone())?)),
        None => Ok(None),
    }
}

/// Rows of `old` for symbols both inventories share, rows of `fresh` for the rest.
fn remap_rows(
    old: &Array2<f32>,
    fresh: &Array2<f32>,
    old_inv: &PhonemeInventory,
    new_inv: &PhonemeInventory,
) -> Array2<f32> {
    let mut out = fresh.clone();
    for (j, sym) in new_inv.symbols().iter().enumerate() {
        if let Some(i) = old_inv.index_of(sym) {
            out.row_mut(j).assign(&old.row(i));
        }
    }
    // trailing non-symbol rows (positional inputs) follow the symbol block
    let (n_old, n_new) = (old_inv.len(), new_inv.len());
    for k in 0..old.nrows() - n_old {
        out.row_mut(n_new + k).assign(&old.row(n_old + k));
    }
    out
}

/// Re-targets a text-conditioned checkpoint to `new_inventory`: input rows of
/// shared symbols are copied, rows of new symbols keep a fresh initialization
/// from `seed`, and all other parameters are copied verbatim.
pub fn transfer_checkpoint(ckpt: &Checkpoint, new_inventory: &PhonemeInventory, seed: u64) -> Result<Checkpoint> {
    let old_inv = checkpoint_inventory(ckpt)?
        .ok_or_else(|| Error::Checkpoint("checkpoint does not record its phoneme inventory".into()))?;
    // sil / wb / eos are in every inventory and do not count as overlap
    let shared = new_inventory
        .symbols()
        .iter()
        .filter(|s| ![SIL, WB, EOS].contains(&s.as_str()))
        .any(|s| old_inv.index_of(s).is_some());
    if !shared {
        return Err(Error::Config("inventories share no phoneme symbols".into()));
    }
    let old = ckpt.params_as::<f32>();
    let (config, fresh, input_param): (serde_json::Value, ParamSet<f32>, &str) = match ckpt.kind {
        ModelKind::Seq2seq => {
            let mut cfg: Seq2SeqConfig = serde_json::from_value(ckpt.config.clone())?;
            cfg.n_symbols = new_inventory.len();
            let fresh = Seq2Seq::<f32>::new(cfg.clone(), seed)?.params;
            (serde_json::to_value(cfg)?, fresh, "embed")
        }
        ModelKind::Lstm | ModelKind::Duration => {
            let mut cfg: LstmConfig = serde_json::from_value(ckpt.config.clone())?;
            if cfg.input_dim != old_inv.len() + POSITIONAL_FEATURES {
                return Err(Error::Checkpoint("lstm input width does not match its inventory".into()));
            }
            cfg.input_dim = new_inventory.len() + POSITIONAL_FEATURES;
            let fresh = LstmRegressor::<f32>::new(cfg.clone(), seed)?.params;
            (serde_json::to_value(cfg)?, fresh, "lstm0.x.w")
        }
        ModelKind::Wavenet => return Err(Error::Config("wavenet checkpoints are not text-conditioned".into())),
    };
    let mut params = ParamSet::new();
    for (name, t) in fresh.iter() {
        let value = if name == input_param {
            remap_rows(old.tensor(name), t, &old_inv, new_inventory)
        } else {
            old.tensor(name).clone()
        };
        params.insert(name, value);
    }
    let mut metadata = ckpt.metadata.clone();
    if let Some(obj) = metadata.as_object_mut() {
        obj.insert("inventory".into(), serde_json::to_value(new_inventory.symbols())?);
        obj.insert("transferred_from_inventory".into(), serde_json::to_value(old_inv.symbols())?);
    }
    Ok(Checkpoint::new(ckpt.kind, config, metadata, &params))
}
