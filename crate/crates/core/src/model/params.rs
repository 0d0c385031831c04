use std::collections::BTreeMap;

use crate::nn::{BatchNormState, Conv2dParams, ConvSpec};
use crate::tensor::{Scalar, Tensor};

use super::{DppBranchSpec, DPP_BRANCHES};

/// Named parameter tensors, keyed by layer path such as
/// `enc.2.sep1.dw.weight`. Normalization running statistics are stored
/// alongside the trainable tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct CSegNetParams<T> {
    tensors: BTreeMap<String, Tensor<T>>,
}

/// Running statistics are state, not trainable parameters.
pub fn is_trainable(name: &str) -> bool {
    !(name.ends_with(".running_mean") || name.ends_with(".running_var"))
}

impl<T: Scalar> CSegNetParams<T> {
    pub fn from_map(tensors: BTreeMap<String, Tensor<T>>) -> Self {
        Self { tensors }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn insert(&mut self, name: String, t: Tensor<T>) {
        self.tensors.insert(name, t);
    }

    pub fn take(&mut self, name: &str) -> Option<Tensor<T>> {
        self.tensors.remove(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Entries in name order.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn trainable(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.tensors.iter().filter(|(n, _)| is_trainable(n))
    }

    pub fn num_trainable(&self) -> usize {
        self.trainable().map(|(_, t)| t.numel()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> CSegNetParams<U> {
        CSegNetParams { tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect() }
    }

    pub fn into_map(self) -> BTreeMap<String, Tensor<T>> {
        self.tensors
    }

    fn conv(&self, name: &str, spec: ConvSpec) -> Option<Conv2dParams<T>> {
        Some(Conv2dParams {
            weight: self.get(&format!("{name}.weight"))?.clone(),
            bias: self.get(&format!("{name}.bias")).cloned(),
            spec,
        })
    }

    fn norm(&self, name: &str) -> Option<BatchNormState<T>> {
        let mut bn = BatchNormState::new(self.get(&format!("{name}.gamma"))?.numel());
        bn.gamma = self.get(&format!("{name}.gamma"))?.clone();
        bn.beta = self.get(&format!("{name}.beta"))?.clone();
        bn.running_mean = self.get(&format!("{name}.running_mean"))?.clone();
        bn.running_var = self.get(&format!("{name}.running_var"))?.clone();
        Some(bn)
    }

    /// Typed view of the pyramid block on skip `stage`; `None` when the
    /// network has no block there.
    pub fn dpp_block(&self, stage: usize) -> Option<DppBlockParams<T>> {
        let mut branches = Vec::with_capacity(DPP_BRANCHES.len());
        for (i, spec) in DPP_BRANCHES.iter().enumerate() {
            let name = format!("dpp.{stage}.b{i}");
            branches.push(match *spec {
                DppBranchSpec::Conv { stride, dilation, .. } => DppBranch::Conv {
                    conv: self.conv(&name, ConvSpec::default().stride(stride).dilation(dilation))?,
                    norm: self.norm(&format!("{name}.bn"))?,
                },
                DppBranchSpec::AvgPool { window, stride } => DppBranch::AvgPool { window, stride },
            });
        }
        let fuse = self.conv(&format!("dpp.{stage}.fuse"), ConvSpec::default())?;
        Some(DppBlockParams { branches, fuse })
    }
}

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum DppBranch<T> {
    Conv { conv: Conv2dParams<T>, norm: BatchNormState<T> },
    AvgPool { window: usize, stride: usize },
}

impl<T: Scalar> DppBranch<T> {
    pub fn out_channels(&self, in_channels: usize) -> usize {
        match self {
            Self::Conv { conv, .. } => conv.out_channels(),
            Self::AvgPool { .. } => in_channels,
        }
    }
}

/// Parameters of one pyramid pooling block.
#[derive(Clone, Debug)]
pub struct DppBlockParams<T> {
    pub branches: Vec<DppBranch<T>>,
    pub fuse: Conv2dParams<T>,
}
