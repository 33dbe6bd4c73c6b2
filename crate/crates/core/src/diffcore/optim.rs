use super::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
struct AdamSlots {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

/// A trainable tensor with its gradient and optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
    momentum: Option<Vec<f64>>,
    adam: Option<AdamSlots>,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            value,
            grad,
            momentum: None,
            adam: None,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Drop momentum and Adam moments.
    pub fn reset_optimizer(&mut self) {
        self.momentum = None;
        self.adam = None;
    }

    pub fn has_optimizer_state(&self) -> bool {
        self.momentum.is_some() || self.adam.is_some()
    }
}

/// Momentum SGD with L2 weight decay (PyTorch convention).
pub fn sgd_step(param: &mut Parameter, lr: f64, momentum: f64, weight_decay: f64) {
    let n = param.value.len();
    let buf = param.momentum.get_or_insert_with(|| vec![0.0; n]);
    let value = param.value.data_mut();
    for ((v, g), b) in value.iter_mut().zip(param.grad.data()).zip(buf.iter_mut()) {
        let d = g + weight_decay * *v;
        *b = momentum * *b + d;
        *v -= lr * *b;
    }
}

/// Bias-corrected Adam.
pub fn adam_step(param: &mut Parameter, lr: f64, beta1: f64, beta2: f64, eps: f64) {
    let n = param.value.len();
    let slots = param.adam.get_or_insert_with(|| AdamSlots {
        m: vec![0.0; n],
        v: vec![0.0; n],
        t: 0,
    });
    slots.t += 1;
    let bc1 = 1.0 - beta1.powi(slots.t as i32);
    let bc2 = 1.0 - beta2.powi(slots.t as i32);
    let value = param.value.data_mut();
    for (i, (x, g)) in value.iter_mut().zip(param.grad.data()).enumerate() {
        slots.m[i] = beta1 * slots.m[i] + (1.0 - beta1) * g;
        slots.v[i] = beta2 * slots.v[i] + (1.0 - beta2) * g * g;
        let m_hat = slots.m[i] / bc1;
        let v_hat = slots.v[i] / bc2;
        *x -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}
