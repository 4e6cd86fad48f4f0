use super::{shape_str, Real, Result, Tensor, TensorError};

/// Layer kinds the engine can express.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv3x3,
    Conv1x1,
    TransposeConv2x2,
    MaxPool2x2,
    Relu,
    Sigmoid,
    Concat,
}

impl LayerKind {
    /// Spatial kernel extent of parameterised kinds.
    pub fn kernel(self) -> Option<usize> {
        match self {
            LayerKind::Conv3x3 => Some(3),
            LayerKind::Conv1x1 => Some(1),
            LayerKind::TransposeConv2x2 => Some(2),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv3x3 => "conv3x3",
            LayerKind::Conv1x1 => "conv1x1",
            LayerKind::TransposeConv2x2 => "transpose_conv2x2",
            LayerKind::MaxPool2x2 => "maxpool2x2",
            LayerKind::Relu => "relu",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::Concat => "concat",
        }
    }
}

/// Declarative description of one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub has_bias: bool,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind, in_channels: usize, out_channels: usize) -> Self {
        Self { name: name.into(), kind, in_channels, out_channels, has_bias: kind.kernel().is_some() }
    }

    /// `k·k·in·out + out` (bias) for parameterised layers, zero otherwise.
    pub fn param_count(&self) -> usize {
        match self.kind.kernel() {
            Some(k) => k * k * self.in_channels * self.out_channels + if self.has_bias { self.out_channels } else { 0 },
            None => 0,
        }
    }

    /// Weight tensor extents: `(out, in, k, k)` for convolutions and
    /// `(in, out, 2, 2)` for the transposed convolution.
    pub fn weight_shape(&self) -> Option<[usize; 4]> {
        match self.kind {
            LayerKind::Conv3x3 | LayerKind::Conv1x1 => {
                let k = self.kind.kernel().unwrap_or(1);
                Some([self.out_channels, self.in_channels, k, k])
            }
            LayerKind::TransposeConv2x2 => Some([self.in_channels, self.out_channels, 2, 2]),
            _ => None,
        }
    }
}

/// A named trainable tensor. `dims` is the logical shape written to weight
/// files (rank 4 for kernels, rank 1 for biases).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<T: Real = f32> {
    pub name: String,
    pub dims: Vec<usize>,
    pub value: Tensor<T>,
}

/// Ordered collection of trainable tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<T: Real = f32> {
    entries: Vec<ParamEntry<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    /// Adds a tensor and returns its slot index.
    pub fn push(&mut self, name: impl Into<String>, dims: Vec<usize>, value: Tensor<T>) -> Result<usize> {
        let n: usize = dims.iter().product();
        if n != value.len() {
            return Err(TensorError::ShapeMismatch {
                op: "ParamSet::push",
                left: shape_str(&dims),
                right: shape_str(&value.shape()),
            });
        }
        self.entries.push(ParamEntry { name: name.into(), dims, value });
        Ok(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn get(&self, slot: usize) -> &Tensor<T> {
        &self.entries[slot].value
    }

    pub fn get_mut(&mut self, slot: usize) -> &mut Tensor<T> {
        &mut self.entries[slot].value
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    /// Total number of stored scalar values.
    pub fn value_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Copies values from `other`, which must hold exactly the same names
    /// and shapes.
    pub fn assign_from(&mut self, other: &ParamSet<T>) -> Result<()> {
        for e in &self.entries {
            let Some(i) = other.find(&e.name) else {
                return Err(TensorError::MissingLayer(e.name.clone()));
            };
            if other.entries[i].dims != e.dims {
                return Err(TensorError::LayerShape {
                    name: e.name.clone(),
                    file: other.entries[i].dims.clone(),
                    model: e.dims.clone(),
                });
            }
        }
        if let Some(extra) = other.entries.iter().find(|o| self.find(&o.name).is_none()) {
            return Err(TensorError::UnexpectedLayer(extra.name.clone()));
        }
        for e in &mut self.entries {
            let i = other.find(&e.name).expect("checked above");
            e.value = other.entries[i].value.clone();
        }
        Ok(())
    }

    /// Precision conversion, names and shapes preserved.
    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry { name: e.name.clone(), dims: e.dims.clone(), value: e.value.cast() })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_count_matches_weight_shapes() {
        for kind in [LayerKind::Conv3x3, LayerKind::Conv1x1, LayerKind::TransposeConv2x2] {
            for (i, o) in [(1, 8), (8, 16), (3, 1)] {
                let spec = LayerSpec::new("x", kind, i, o);
                let ws = spec.weight_shape().unwrap();
                assert_eq!(spec.param_count(), ws.iter().product::<usize>() + o);
            }
        }
        assert_eq!(LayerSpec::new("r", LayerKind::Relu, 4, 4).param_count(), 0);
        let mut nb = LayerSpec::new("c", LayerKind::Conv3x3, 2, 3);
        nb.has_bias = false;
        assert_eq!(nb.param_count(), 54);
    }

    #[test]
    fn assign_checks_names_and_shapes() {
        let mut a = ParamSet::<f32>::new();
        a.push("w", vec![2, 2], Tensor::zeros([2, 2, 1, 1])).unwrap();
        let mut b = ParamSet::<f32>::new();
        b.push("w", vec![4], Tensor::filled([4, 1, 1, 1], 1.0)).unwrap();
        assert!(matches!(a.assign_from(&b), Err(TensorError::LayerShape { .. })));
        let mut c = ParamSet::<f32>::new();
        c.push("w", vec![2, 2], Tensor::filled([2, 2, 1, 1], 3.0)).unwrap();
        a.assign_from(&c).unwrap();
        assert_eq!(a.get(0).data(), &[3.0; 4]);
    }
}
