use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferId(pub usize);

/// Named trainable tensors plus non-trainable buffers (batch-norm running
/// statistics). Insertion order is the canonical order everywhere.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<(String, Array2<f64>)>,
    buffers: Vec<(String, Array2<f64>)>,
}

impl ParamStore {
    pub fn add(&mut self, name: &str, value: Array2<f64>) -> ParamId {
        self.params.push((name.to_string(), value));
        ParamId(self.params.len() - 1)
    }

    pub fn add_buffer(&mut self, name: &str, value: Array2<f64>) -> BufferId {
        self.buffers.push((name.to_string(), value));
        BufferId(self.buffers.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].0
    }

    pub fn value(&self, id: ParamId) -> &Array2<f64> {
        &self.params[id.0].1
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.params[id.0].1
    }

    pub fn buffer(&self, id: BufferId) -> &Array2<f64> {
        &self.buffers[id.0].1
    }

    pub fn buffer_mut(&mut self, id: BufferId) -> &mut Array2<f64> {
        &mut self.buffers[id.0].1
    }

    pub fn params(&self) -> &[(String, Array2<f64>)] {
        &self.params
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Array2<f64>> {
        self.params.iter_mut().map(|(_, v)| v)
    }

    pub fn buffers(&self) -> &[(String, Array2<f64>)] {
        &self.buffers
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|(_, v)| v.len()).sum()
    }

    pub fn zero_grads(&self) -> Vec<Array2<f64>> {
        self.params.iter().map(|(_, v)| Array2::zeros(v.raw_dim())).collect()
    }

    /// Replaces all tensors by name; every name and shape must match.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<(), String> {
        let check = |mine: &[(String, Array2<f64>)], theirs: &[(String, Array2<f64>)]| {
            if mine.len() != theirs.len() {
                return Err(format!("expected {} tensors, found {}", mine.len(), theirs.len()));
            }
            for ((a, va), (b, vb)) in mine.iter().zip(theirs) {
                if a != b || va.dim() != vb.dim() {
                    return Err(format!("tensor {a} {:?} does not match {b} {:?}", va.dim(), vb.dim()));
                }
            }
            Ok(())
        };
        check(&self.params, &other.params)?;
        check(&self.buffers, &other.buffers)?;
        self.params.clone_from(&other.params);
        self.buffers.clone_from(&other.buffers);
        Ok(())
    }
}

/// Affine map `x · w + b`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// Weights uniform in `±sqrt(6 / fan_in)`, zero bias.
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        let w = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..bound));
        Self {
            w: store.add(&format!("{name}.weight"), w),
            b: store.add(&format!("{name}.bias"), Array2::zeros((1, fan_out))),
            fan_in,
            fan_out,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: BufferId,
    pub running_var: BufferId,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        Self {
            gamma: store.add(&format!("{name}.gamma"), Array2::ones((1, width))),
            beta: store.add(&format!("{name}.beta"), Array2::zeros((1, width))),
            running_mean: store.add_buffer(&format!("{name}.running_mean"), Array2::zeros((1, width))),
            running_var: store.add_buffer(&format!("{name}.running_var"), Array2::ones((1, width))),
        }
    }
}
