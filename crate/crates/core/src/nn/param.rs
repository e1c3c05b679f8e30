//! Trainable parameter: a value tensor plus an accumulated gradient.

use ndarray::{ArrayD, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Ix1, Ix2};
use serde::de::Deserializer;
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

/// A named-shape f64 tensor with a same-shape gradient buffer.
///
/// Only the value is serialized; the gradient is rebuilt as zeros on load.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: ArrayD<f64>,
    pub grad: ArrayD<f64>,
}

impl Param {
    pub fn new(value: ArrayD<f64>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Param { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn view2(&self) -> ArrayView2<'_, f64> {
        self.value.view().into_dimensionality::<Ix2>().unwrap()
    }

    pub fn view1(&self) -> ArrayView1<'_, f64> {
        self.value.view().into_dimensionality::<Ix1>().unwrap()
    }

    pub fn grad2_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        self.grad.view_mut().into_dimensionality::<Ix2>().unwrap()
    }

    pub fn grad1_mut(&mut self) -> ArrayViewMut1<'_, f64> {
        self.grad.view_mut().into_dimensionality::<Ix1>().unwrap()
    }
}

impl Serialize for Param {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.value.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Param {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = ArrayD::<f64>::deserialize(deserializer)?;
        Ok(Param::new(value))
    }
}
