//! Small fully connected Q-network for toy problems.

use rand::Rng;

use crate::nn::layers::{leaky_relu, leaky_relu_grad, Dense};
use crate::nn::network::check_grad_shapes;
use crate::nn::{next_stamp, ForwardCache, NetError, QFunction, Tensor, NUM_ACTIONS};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpQNetwork {
    layers: Vec<Dense>,
    leaky_slope: f64,
    stamp: u64,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    stamp: u64,
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Vec<f64>>,
    q: [f64; NUM_ACTIONS],
}

impl ForwardCache for MlpCache {
    fn q_values(&self) -> [f64; NUM_ACTIONS] {
        self.q
    }
}

impl MlpQNetwork {
    /// `hidden` lists hidden layer widths; the output layer is linear.
    pub fn init<R: Rng + ?Sized>(inputs: usize, hidden: &[usize], leaky_slope: f64, rng: &mut R) -> Self {
        let mut layers = Vec::new();
        let mut width = inputs;
        for &h in hidden {
            layers.push(Dense::init(width, h, leaky_slope, rng));
            width = h;
        }
        layers.push(Dense::init(width, NUM_ACTIONS, 1.0, rng));
        Self {
            layers,
            leaky_slope,
            stamp: next_stamp(),
        }
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs()
    }
}

impl QFunction for MlpQNetwork {
    type Input = Vec<f64>;
    type Cache = MlpCache;

    fn forward(&self, input: &Vec<f64>) -> Result<MlpCache, NetError> {
        if input.len() != self.input_len() {
            return Err(NetError::ShapeMismatch {
                expected: format!("{} inputs", self.input_len()),
                found: format!("{} inputs", input.len()),
            });
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut x = input.clone();
        let mut q = [0.0; NUM_ACTIONS];
        for (i, layer) in self.layers.iter().enumerate() {
            if i == last {
                layer.forward(&x, &mut q);
                inputs.push(x);
                break;
            }
            let mut z = vec![0.0; layer.outputs()];
            layer.forward(&x, &mut z);
            let act = z.iter().map(|&v| leaky_relu(v, self.leaky_slope)).collect();
            inputs.push(std::mem::replace(&mut x, act));
            pre.push(z);
        }
        Ok(MlpCache {
            stamp: self.stamp,
            inputs,
            pre,
            q,
        })
    }

    fn backward_into(
        &self,
        cache: &MlpCache,
        dq: &[f64; NUM_ACTIONS],
        grads: &mut [Tensor],
    ) -> Result<(), NetError> {
        if cache.stamp != self.stamp {
            return Err(NetError::StaleCache);
        }
        check_grad_shapes(&self.params(), grads)?;
        let mut upstream = dq.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (gw, gb) = grads[2 * i..2 * i + 2].split_at_mut(1);
            let mut dx = vec![0.0; layer.inputs()];
            layer.backward(
                &cache.inputs[i],
                &upstream,
                gw[0].data_mut(),
                gb[0].data_mut(),
                (i > 0).then_some(dx.as_mut_slice()),
            );
            if i > 0 {
                for (d, &z) in dx.iter_mut().zip(&cache.pre[i - 1]) {
                    *d *= leaky_relu_grad(z, self.leaky_slope);
                }
                upstream = dx;
            }
        }
        Ok(())
    }

    fn params(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.stamp = next_stamp();
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}
