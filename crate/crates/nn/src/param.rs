use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Optimized by the training loop; carries a gradient.
    Trainable,
    /// Learnable in principle but excluded from optimization.
    Frozen,
    /// Non-learnable state such as batch-norm running statistics.
    Buffer,
}

/// A named tensor owned by a layer. Only trainable parameters hold a
/// gradient buffer.
#[derive(Clone, Debug)]
pub struct Param {
    name: String,
    kind: ParamKind,
    pub value: Tensor,
    grad: Option<Tensor>,
}

impl Param {
    pub fn new(name: impl Into<String>, kind: ParamKind, value: Tensor) -> Self {
        let grad = (kind == ParamKind::Trainable).then(|| Tensor::zeros(value.shape()));
        Self {
            name: name.into(),
            kind,
            value,
            grad,
        }
    }

    pub fn trainable(name: impl Into<String>, value: Tensor) -> Self {
        Self::new(name, ParamKind::Trainable, value)
    }

    pub fn buffer(name: impl Into<String>, value: Tensor) -> Self {
        Self::new(name, ParamKind::Buffer, value)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ParamKind {
        self.kind
    }

    pub fn is_trainable(&self) -> bool {
        self.kind == ParamKind::Trainable
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }

    pub fn grad(&self) -> Option<&Tensor> {
        self.grad.as_ref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut Tensor> {
        self.grad.as_mut()
    }

    /// Mutable access to value and gradient together, for optimizers.
    pub fn value_and_grad_mut(&mut self) -> (&mut Tensor, Option<&Tensor>) {
        (&mut self.value, self.grad.as_ref())
    }

    /// Moves a trainable parameter out of optimization and drops its gradient.
    pub fn freeze(&mut self) {
        if self.kind == ParamKind::Trainable {
            self.kind = ParamKind::Frozen;
            self.grad = None;
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.fill(0.0);
        }
    }
}

/// Anything that owns parameters. Visit order must be stable: optimizers and
/// checkpoints rely on it.
pub trait Parameterized {
    fn visit_params(&self, f: &mut dyn FnMut(&Param));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param));

    fn zero_grad(&mut self) {
        self.visit_params_mut(&mut |p| p.zero_grad());
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ParamCounts {
    pub trainable: usize,
    pub frozen: usize,
    pub buffers: usize,
}

pub fn count_params(module: &dyn Parameterized) -> ParamCounts {
    let mut counts = ParamCounts::default();
    module.visit_params(&mut |p| match p.kind() {
        ParamKind::Trainable => counts.trainable += p.numel(),
        ParamKind::Frozen => counts.frozen += p.numel(),
        ParamKind::Buffer => counts.buffers += p.numel(),
    });
    counts
}
