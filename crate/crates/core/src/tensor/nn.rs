use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Graph, Matrix, Var};

/// A container of named trainable matrices.
///
/// Visiting order is fixed per type; optimiser state and gradient vectors are
/// aligned to it.
pub trait Module<T: Scalar> {
    fn visit<'s>(&'s self, prefix: &str, f: &mut dyn FnMut(String, &'s Matrix<T>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix<T>));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, m| n += m.len());
        n
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Affine map `y = x·Wᵀ + b`, weight stored as `out × in`.
#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub weight: Matrix<T>,
    pub bias: Matrix<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let std = (1.0 / input as f64).sqrt();
        Self {
            weight: Matrix::randn(output, input, std, rng),
            bias: Matrix::zeros(1, output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward<'a>(&'a self, g: &mut Graph<'a, T>, x: Var) -> Var {
        let w = g.param(&self.weight);
        let b = g.param(&self.bias);
        let y = g.matmul_t(x, w);
        g.add_row(y, b)
    }
}

impl<T: Scalar> Module<T> for Linear<T> {
    fn visit<'s>(&'s self, prefix: &str, f: &mut dyn FnMut(String, &'s Matrix<T>)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix<T>)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

/// Two-layer perceptron with a tanh hidden layer.
#[derive(Debug, Clone)]
pub struct Mlp<T> {
    pub hidden: Linear<T>,
    pub output: Linear<T>,
}

impl<T: Scalar> Mlp<T> {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        Self {
            hidden: Linear::new(input, hidden, rng),
            output: Linear::new(hidden, output, rng),
        }
    }

    pub fn forward<'a>(&'a self, g: &mut Graph<'a, T>, x: Var) -> Var {
        let h = self.hidden.forward(g, x);
        let h = g.tanh(h);
        self.output.forward(g, h)
    }
}

impl<T: Scalar> Module<T> for Mlp<T> {
    fn visit<'s>(&'s self, prefix: &str, f: &mut dyn FnMut(String, &'s Matrix<T>)) {
        self.hidden.visit(&join(prefix, "hidden"), f);
        self.output.visit(&join(prefix, "output"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix<T>)) {
        self.hidden.visit_mut(&join(prefix, "hidden"), f);
        self.output.visit_mut(&join(prefix, "output"), f);
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm<T> {
    pub weight: Matrix<T>,
    pub bias: Matrix<T>,
    pub eps: T,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn new(dim: usize, eps: f64) -> Self {
        Self {
            weight: Matrix::filled(1, dim, T::one()),
            bias: Matrix::zeros(1, dim),
            eps: T::lit(eps),
        }
    }

    pub fn forward<'a>(&'a self, g: &mut Graph<'a, T>, x: Var) -> Var {
        let w = g.param(&self.weight);
        let b = g.param(&self.bias);
        g.layer_norm(x, w, b, self.eps)
    }
}

impl<T: Scalar> Module<T> for LayerNorm<T> {
    fn visit<'s>(&'s self, prefix: &str, f: &mut dyn FnMut(String, &'s Matrix<T>)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix<T>)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

/// Gradients of a module, aligned with its visiting order. Parameters that did
/// not take part in the loss get zeros.
pub fn collect_grads<T: Scalar, M: Module<T> + ?Sized>(g: &Graph<'_, T>, module: &M) -> Vec<Matrix<T>> {
    let mut out = Vec::new();
    module.visit("", &mut |_, m| {
        out.push(match g.param_grad(m) {
            Some(grad) => grad.clone(),
            None => Matrix::zeros(m.rows(), m.cols()),
        })
    });
    out
}

pub fn add_grads<T: Scalar>(acc: &mut Vec<Matrix<T>>, other: &[Matrix<T>]) {
    if acc.is_empty() {
        acc.extend(other.iter().cloned());
        return;
    }
    for (a, b) in acc.iter_mut().zip(other) {
        a.add_assign(b);
    }
}

pub fn flatten_params<T: Scalar, M: Module<T> + ?Sized>(module: &M) -> Vec<T> {
    let mut out = Vec::new();
    module.visit("", &mut |_, m| out.extend_from_slice(m.data()));
    out
}

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient norm clip; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: Some(5.0),
        }
    }
}

/// Adam optimiser state for one module.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    config: AdamConfig,
    step: i32,
    first: Vec<Matrix<T>>,
    second: Vec<Matrix<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new<M: Module<T> + ?Sized>(module: &M, config: AdamConfig) -> Self {
        let mut first = Vec::new();
        module.visit("", &mut |_, m| first.push(Matrix::zeros(m.rows(), m.cols())));
        let second = first.clone();
        Self {
            config,
            step: 0,
            first,
            second,
        }
    }

    pub fn step<M: Module<T> + ?Sized>(&mut self, module: &mut M, grads: &mut [Matrix<T>]) {
        assert_eq!(grads.len(), self.first.len(), "gradient count mismatch");
        if let Some(max_norm) = self.config.max_grad_norm {
            let norm = grads
                .iter()
                .flat_map(|g| g.data().iter())
                .map(|v| v.as_f64() * v.as_f64())
                .sum::<f64>()
                .sqrt();
            if norm > max_norm {
                let s = T::lit(max_norm / norm);
                grads.iter_mut().for_each(|g| g.scale_assign(s));
            }
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bias1 = T::lit(1.0 - c.beta1.powi(self.step));
        let bias2 = T::lit(1.0 - c.beta2.powi(self.step));
        let (lr, eps) = (T::lit(c.learning_rate), T::lit(c.eps));
        let mut i = 0;
        let (first, second) = (&mut self.first, &mut self.second);
        module.visit_mut("", &mut |_, p| {
            let g = &grads[i];
            let (m, v) = (&mut first[i], &mut second[i]);
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = b1 * *mv + (T::one() - b1) * gv;
                *vv = b2 * *vv + (T::one() - b2) * gv * gv;
                let m_hat = *mv / bias1;
                let v_hat = *vv / bias2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            i += 1;
        });
    }
}

/// Writes every parameter of `module` to a safetensors file.
pub fn save_safetensors<T: Scalar, M: Module<T> + ?Sized>(module: &M, path: &Path) -> Result<()> {
    let mut buffers: BTreeMap<String, (Vec<usize>, Vec<u8>)> = BTreeMap::new();
    module.visit("", &mut |name, m| {
        let mut bytes = Vec::with_capacity(m.len() * T::BYTES);
        for &v in m.data() {
            v.write_le(&mut bytes);
        }
        buffers.insert(name, (vec![m.rows(), m.cols()], bytes));
    });
    let dtype = if T::BYTES == 8 { Dtype::F64 } else { Dtype::F32 };
    let views = buffers
        .iter()
        .map(|(name, (shape, bytes))| {
            TensorView::new(dtype, shape.clone(), bytes)
                .map(|v| (name.clone(), v))
                .map_err(|e| Error::Checkpoint(format!("{name}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let data = safetensors::serialize(views, &None)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    crate::error::write_file(path, data)
}

/// Tensors read from a safetensors file, converted to the target scalar.
pub struct TensorFile<T> {
    tensors: BTreeMap<String, Matrix<T>>,
}

impl<T: Scalar> TensorFile<T> {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let st = SafeTensors::deserialize(&bytes)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let mut tensors = BTreeMap::new();
        for (name, view) in st.tensors() {
            let shape = view.shape();
            let (rows, cols) = match shape {
                [n] => (1, *n),
                [r, c] => (*r, *c),
                _ => {
                    return Err(Error::Checkpoint(format!(
                        "{name}: unsupported rank {}",
                        shape.len()
                    )))
                }
            };
            let data: Vec<T> = match view.dtype() {
                Dtype::F32 => view
                    .data()
                    .chunks_exact(4)
                    .map(|c| T::lit(f32::read_le(c) as f64))
                    .collect(),
                Dtype::F64 => view
                    .data()
                    .chunks_exact(8)
                    .map(|c| T::lit(f64::read_le(c)))
                    .collect(),
                other => {
                    return Err(Error::Checkpoint(format!(
                        "{name}: unsupported dtype {other:?}"
                    )))
                }
            };
            tensors.insert(name, Matrix::from_vec(rows, cols, data));
        }
        Ok(Self { tensors })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&Matrix<T>> {
        self.tensors.get(name)
    }

    /// Copies tensors into `module`. `rename` maps a module parameter name to
    /// the stored name; every parameter must be present with matching size.
    pub fn load_into<M: Module<T> + ?Sized>(
        &self,
        module: &mut M,
        rename: impl Fn(&str) -> Vec<String>,
    ) -> Result<()> {
        let mut failure = None;
        module.visit_mut("", &mut |name, m| {
            if failure.is_some() {
                return;
            }
            let found = rename(&name)
                .into_iter()
                .find_map(|candidate| self.tensors.get(&candidate));
            match found {
                Some(src) if src.len() == m.len() => {
                    *m = Matrix::from_vec(m.rows(), m.cols(), src.data().to_vec());
                }
                Some(src) => {
                    failure = Some(Error::Checkpoint(format!(
                        "{name}: expected {:?}, found {:?}",
                        m.shape(),
                        src.shape()
                    )))
                }
                None => failure = Some(Error::Checkpoint(format!("missing tensor {name}"))),
            }
        });
        failure.map_or(Ok(()), Err)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn adam_minimises_a_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut lin = Linear::<f64>::new(3, 1, &mut rng);
        let mut opt = Adam::new(
            &lin,
            AdamConfig {
                learning_rate: 0.05,
                ..AdamConfig::default()
            },
        );
        let x = Matrix::from_vec(2, 3, vec![1., 0., 2., 0., 1., -1.]);
        let mut last = f64::INFINITY;
        for _ in 0..200 {
            let mut g = Graph::new();
            let xv = g.input(x.clone());
            let y = lin.forward(&mut g, xv);
            let loss = g.bce_with_logits(y, &[1.0, 0.0], 1.0);
            last = g.scalar(loss);
            g.backward(loss);
            let mut grads = collect_grads(&g, &lin);
            drop(g);
            opt.step(&mut lin, &mut grads);
        }
        assert!(last < 0.05, "loss {last}");
    }

    #[test]
    fn safetensors_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::<f32>::new(4, 3, 2, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.safetensors");
        save_safetensors(&mlp, &path).unwrap();
        let mut other = Mlp::<f32>::new(4, 3, 2, &mut ChaCha8Rng::seed_from_u64(4));
        TensorFile::read(&path)
            .unwrap()
            .load_into(&mut other, |n| vec![n.to_string()])
            .unwrap();
        assert_eq!(flatten_params(&mlp), flatten_params(&other));
    }
}
