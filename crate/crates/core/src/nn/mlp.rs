use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use super::{NnError, Scalar};

pub const DEFAULT_SLOPE: f64 = 0.01;

/// One affine layer. The weight is stored `in x out` so a batch `X` maps to
/// `X W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<S> {
    pub weight: Array2<S>,
    pub bias: Array1<S>,
}

impl<S: Scalar> Layer<S> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weight: Array2::zeros((inputs, outputs)), bias: Array1::zeros(outputs) }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    fn cast<T: Scalar>(&self) -> Layer<T> {
        let c = |x: &S| T::from_f64(x.to_f64().unwrap()).unwrap();
        Layer { weight: self.weight.map(c), bias: self.bias.map(c) }
    }
}

/// Multilayer perceptron: leaky ReLU after every layer except the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<S> {
    layers: Vec<Layer<S>>,
    slope: S,
}

/// Activations recorded by [`Mlp::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpCache<S> {
    inputs: Vec<Array2<S>>,
    pre: Vec<Array2<S>>,
}

impl<S: Scalar> MlpCache<S> {
    /// Pre-activations of every layer.
    pub fn pre_activations(&self) -> &[Array2<S>] {
        &self.pre
    }
}

/// Parameter gradients, laid out like the network's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads<S> {
    pub layers: Vec<Layer<S>>,
}

impl<S: Scalar> MlpGrads<S> {
    pub fn zeros_like(mlp: &Mlp<S>) -> Self {
        Self { layers: mlp.layers.iter().map(|l| Layer::zeros(l.inputs(), l.outputs())).collect() }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, s: S) {
        for l in &mut self.layers {
            l.weight *= s;
            l.bias *= s;
        }
    }

    pub fn tensors(&self) -> Vec<&[S]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice().unwrap(), l.bias.as_slice().unwrap()])
            .collect()
    }
}

impl<S: Scalar> Mlp<S> {
    /// Kaiming-uniform weights (fan-in, leaky-ReLU gain) and zero biases.
    /// `widths` lists the input width followed by each layer's output width.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], slope: f64, rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "need an input and an output width");
        let gain = (2.0 / (1.0 + slope * slope)).sqrt();
        let layers = widths
            .windows(2)
            .map(|w| {
                let bound = gain * (3.0 / w[0] as f64).sqrt();
                let weight = Array2::from_shape_simple_fn((w[0], w[1]), || S::lit(rng.random_range(-bound..bound)));
                Layer { weight, bias: Array1::zeros(w[1]) }
            })
            .collect();
        Self { layers, slope: S::lit(slope) }
    }

    pub fn from_layers(layers: Vec<Layer<S>>, slope: S) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::NoLayers);
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.outputs() {
                return Err(NnError::WidthMismatch { expected: l.outputs(), got: l.bias.len() });
            }
            if i > 0 && layers[i - 1].outputs() != l.inputs() {
                return Err(NnError::WidthMismatch { expected: layers[i - 1].outputs(), got: l.inputs() });
            }
        }
        Ok(Self { layers, slope })
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<S>] {
        &mut self.layers
    }

    pub fn slope(&self) -> S {
        self.slope
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    /// Input width followed by every layer's output width.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_width()).chain(self.layers.iter().map(Layer::outputs)).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn cast<T: Scalar>(&self) -> Mlp<T> {
        Mlp { layers: self.layers.iter().map(Layer::cast).collect(), slope: T::from_f64(self.slope.to_f64().unwrap()).unwrap() }
    }

    fn check_input(&self, x: &ArrayView2<S>) -> Result<(), NnError> {
        if x.ncols() != self.input_width() {
            return Err(NnError::WidthMismatch { expected: self.input_width(), got: x.ncols() });
        }
        Ok(())
    }

    fn affine(layer: &Layer<S>, x: &ArrayView2<S>) -> Array2<S> {
        let mut z = x.dot(&layer.weight);
        z += &layer.bias;
        z
    }

    fn activate(&self, z: &mut Array2<S>) {
        let slope = self.slope;
        z.mapv_inplace(|v| if v > S::zero() { v } else { v * slope });
    }

    /// Row-wise evaluation without recording activations.
    pub fn predict(&self, x: ArrayView2<S>) -> Result<Array2<S>, NnError> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let mut h = Self::affine(&self.layers[0], &x);
        if last > 0 {
            self.activate(&mut h);
        }
        for (i, layer) in self.layers.iter().enumerate().skip(1) {
            h = Self::affine(layer, &h.view());
            if i < last {
                self.activate(&mut h);
            }
        }
        Ok(h)
    }

    /// Row-wise evaluation recording what [`Mlp::backward`] needs.
    pub fn forward(&self, x: ArrayView2<S>) -> Result<(Array2<S>, MlpCache<S>), NnError> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = Self::affine(layer, &h.view());
            inputs.push(h);
            h = z.clone();
            if i < last {
                self.activate(&mut h);
            }
            pre.push(z);
        }
        Ok((h, MlpCache { inputs, pre }))
    }

    /// Reverse-mode gradients for the output gradient `grad_out`; returns the
    /// parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, cache: &MlpCache<S>, grad_out: ArrayView2<S>) -> Result<(MlpGrads<S>, Array2<S>), NnError> {
        if cache.inputs.len() != self.layers.len()
            || cache.pre.len() != self.layers.len()
            || cache.inputs.iter().zip(&self.layers).any(|(x, l)| x.ncols() != l.inputs())
        {
            return Err(NnError::CacheMismatch);
        }
        let rows = cache.inputs[0].nrows();
        if grad_out.dim() != (rows, self.output_width()) {
            return Err(NnError::CacheMismatch);
        }
        let last = self.layers.len() - 1;
        let slope = self.slope;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.to_owned();
        for i in (0..self.layers.len()).rev() {
            if i < last {
                Zip::from(&mut g).and(&cache.pre[i]).for_each(|g, &z| {
                    if z <= S::zero() {
                        *g *= slope;
                    }
                });
            }
            let weight = cache.inputs[i].t().dot(&g).as_standard_layout().into_owned();
            let bias = g.sum_axis(Axis(0));
            let next = g.dot(&self.layers[i].weight.t());
            grads.push(Layer { weight, bias });
            g = next;
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, g))
    }

    pub fn tensors(&self) -> Vec<&[S]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice().unwrap(), l.bias.as_slice().unwrap()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [S]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_slice_mut().unwrap() as &mut [S], l.bias.as_slice_mut().unwrap()])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_bias() {
        let mut l = Layer::<f64>::zeros(3, 2);
        l.bias = array![0.5, -2.0];
        let m = Mlp::from_layers(vec![l], 0.01).unwrap();
        let y = m.predict(array![[1.0, 2.0, 3.0]].view()).unwrap();
        assert_eq!(y, array![[0.5, -2.0]]);
    }

    #[test]
    fn identity_layer() {
        let l = Layer { weight: Array2::<f64>::eye(3), bias: Array1::zeros(3) };
        let m = Mlp::from_layers(vec![l], 0.01).unwrap();
        let x = array![[1.0, -2.0, 3.0]];
        assert_eq!(m.predict(x.view()).unwrap(), x);
    }

    #[test]
    fn leaky_negative_side() {
        let first = Layer { weight: array![[1.0f64]], bias: array![-2.0] };
        let second = Layer { weight: array![[1.0]], bias: array![0.0] };
        let m = Mlp::from_layers(vec![first, second], 0.01).unwrap();
        let y = m.predict(array![[1.0]].view()).unwrap();
        assert!((y[[0, 0]] + 0.01).abs() < 1e-15);
    }

    #[test]
    fn width_mismatch() {
        let m = Mlp::<f64>::new(&[3, 4, 1], 0.01, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(m.predict(array![[1.0, 2.0]].view()), Err(NnError::WidthMismatch { expected: 3, got: 2 })));
        let other = Mlp::<f64>::new(&[2, 4, 1], 0.01, &mut ChaCha8Rng::seed_from_u64(0));
        let (_, cache) = other.forward(array![[1.0, 2.0]].view()).unwrap();
        assert_eq!(m.backward(&cache, array![[1.0]].view()).unwrap_err(), NnError::CacheMismatch);
    }

    #[test]
    fn linear_weight_gradient_is_input() {
        let l = Layer { weight: array![[0.3], [-0.2], [0.9]], bias: array![0.1] };
        let m = Mlp::from_layers(vec![l], 0.01).unwrap();
        let x = array![[1.5, -0.5, 2.0]];
        let (_, cache) = m.forward(x.view()).unwrap();
        let (g, gin) = m.backward(&cache, array![[1.0]].view()).unwrap();
        assert_eq!(g.layers[0].weight.column(0).to_vec(), x.row(0).to_vec());
        assert_eq!(g.layers[0].bias[0], 1.0);
        assert_eq!(gin.row(0).to_vec(), vec![0.3, -0.2, 0.9]);
    }

    #[test]
    fn zero_output_gradient() {
        let m = Mlp::<f64>::new(&[4, 8, 8, 2], 0.01, &mut ChaCha8Rng::seed_from_u64(1));
        let x = Array2::from_elem((5, 4), 0.3);
        let (_, cache) = m.forward(x.view()).unwrap();
        let (g, gin) = m.backward(&cache, Array2::zeros((5, 2)).view()).unwrap();
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
        assert!(gin.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kaiming_bounds_and_zero_bias() {
        let m = Mlp::<f32>::new(&[64, 32, 1], 0.01, &mut ChaCha8Rng::seed_from_u64(2));
        let bound = (2.0f32 / 1.0001).sqrt() * (3.0f32 / 64.0).sqrt();
        assert!(m.layers()[0].weight.iter().all(|w| w.abs() <= bound));
        assert!(m.layers()[0].bias.iter().all(|&b| b == 0.0));
    }

    fn loss(m: &Mlp<f64>, x: &Array2<f64>, w: &Array2<f64>) -> f64 {
        (m.predict(x.view()).unwrap() * w).sum()
    }

    fn pattern(m: &Mlp<f64>, x: &Array2<f64>) -> Vec<bool> {
        let (_, c) = m.forward(x.view()).unwrap();
        c.pre_activations().iter().flat_map(|p| p.iter().map(|&v| v > 0.0).collect::<Vec<_>>()).collect()
    }

    /// Analytic gradients against central differences, skipping coordinates
    /// whose perturbation flips an activation (the map is not smooth there).
    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        let mut skipped = 0;
        let mut checked = 0;
        for _ in 0..100 {
            let depth = rng.random_range(1..4);
            let mut widths = vec![rng.random_range(1..6)];
            for _ in 0..depth {
                widths.push(rng.random_range(1..6));
            }
            let mut m = Mlp::<f64>::new(&widths, 0.01, &mut rng);
            for l in m.layers_mut() {
                l.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
            }
            let rows = rng.random_range(1..4);
            let x = Array2::from_shape_simple_fn((rows, widths[0]), || rng.random_range(-1.0..1.0));
            let w = Array2::from_shape_simple_fn((rows, *widths.last().unwrap()), || rng.random_range(-1.0..1.0));
            let (_, cache) = m.forward(x.view()).unwrap();
            let (g, gin) = m.backward(&cache, w.view()).unwrap();
            let base = pattern(&m, &x);

            let analytic: Vec<f64> = g.tensors().concat();
            let mut numeric = Vec::new();
            let mut valid = Vec::new();
            let n_tensors = m.tensors().len();
            for ti in 0..n_tensors {
                let len = m.tensors()[ti].len();
                for k in 0..len {
                    let orig = m.tensors()[ti][k];
                    m.tensors_mut()[ti][k] = orig + h;
                    let (fp, pp) = (loss(&m, &x, &w), pattern(&m, &x));
                    m.tensors_mut()[ti][k] = orig - h;
                    let (fm, pm) = (loss(&m, &x, &w), pattern(&m, &x));
                    m.tensors_mut()[ti][k] = orig;
                    numeric.push((fp - fm) / (2.0 * h));
                    valid.push(pp == base && pm == base);
                }
            }
            let mut xin = x.clone();
            let mut in_num = Vec::new();
            for idx in 0..xin.len() {
                let orig = xin.as_slice().unwrap()[idx];
                xin.as_slice_mut().unwrap()[idx] = orig + h;
                let fp = loss(&m, &xin, &w);
                let pp = pattern(&m, &xin);
                xin.as_slice_mut().unwrap()[idx] = orig - h;
                let fm = loss(&m, &xin, &w);
                let pm = pattern(&m, &xin);
                xin.as_slice_mut().unwrap()[idx] = orig;
                in_num.push((fp - fm) / (2.0 * h));
                valid.push(pp == base && pm == base);
            }
            numeric.extend(in_num);
            let analytic: Vec<f64> = analytic.into_iter().chain(gin.iter().copied()).collect();
            for ((a, n), ok) in analytic.iter().zip(&numeric).zip(&valid) {
                if !ok {
                    skipped += 1;
                    continue;
                }
                checked += 1;
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "max relative error {worst}");
        assert!(skipped * 100 < checked, "{skipped} skipped of {checked}");
    }
}
