use rand::Rng;

use super::param::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Lookup table `[vocab, dim]`.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        vocab: usize,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let table = store.register_uniform(format!("{name}.weight"), &[vocab, dim], dim, rng)?;
        Ok(Self { table, vocab, dim })
    }

    pub fn check(&self, id: usize) -> Result<()> {
        if id >= self.vocab {
            return Err(Error::TokenOutOfRange { id, size: self.vocab });
        }
        Ok(())
    }

    pub fn lookup<'a>(&self, store: &'a ParamStore, id: usize) -> Result<&'a [f64]> {
        self.check(id)?;
        Ok(store.value(self.table).row(id))
    }

    pub fn forward(&self, store: &ParamStore, ids: &[usize]) -> Result<Tensor> {
        let mut out = Tensor::zeros(&[ids.len(), self.dim]);
        for (t, &id) in ids.iter().enumerate() {
            out.row_mut(t).copy_from_slice(self.lookup(store, id)?);
        }
        Ok(out)
    }

    /// Scatters `dy` rows into the table gradient. Rows of `dy` whose id is
    /// `None` are skipped.
    pub fn backward(&self, store: &mut ParamStore, ids: &[Option<usize>], dy: &Tensor) -> Result<()> {
        dy.expect_shape("embedding upstream", &[ids.len(), self.dim])?;
        let grad = &mut store.get_mut(self.table).grad;
        for (t, id) in ids.iter().enumerate() {
            let Some(id) = *id else { continue };
            self.check(id)?;
            for (g, d) in grad.row_mut(id).iter_mut().zip(dy.row(t)) {
                *g += d;
            }
        }
        Ok(())
    }
}
