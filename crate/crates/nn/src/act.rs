use crate::tensor::Tensor;

pub fn relu_inplace(x: &mut Tensor) {
    x.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Masks `grad` by the ReLU output `activated` (gradient passes where the
/// output was positive).
pub fn relu_backward_inplace(grad: &mut Tensor, activated: &Tensor) {
    debug_assert_eq!(grad.shape(), activated.shape());
    for (g, &a) in grad.data_mut().iter_mut().zip(activated.data()) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

pub(crate) fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}
