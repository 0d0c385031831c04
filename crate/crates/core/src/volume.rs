//! Dense 3-D volumes indexed `(slice, row, col)`.

use serde::{Deserialize, Serialize};

use crate::error::TensorError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Volume<T> {
    dims: [usize; 3],
    data: Vec<T>,
}

impl<T: Copy> Volume<T> {
    pub fn new(dims: [usize; 3], data: Vec<T>) -> Result<Self, TensorError> {
        let n = dims.iter().product();
        if data.len() != n {
            return Err(TensorError::DataLength { expected: n, actual: data.len() });
        }
        Ok(Self { dims, data })
    }

    pub fn filled(dims: [usize; 3], value: T) -> Self {
        Self { dims, data: vec![value; dims.iter().product()] }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn depth(&self) -> usize {
        self.dims[0]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> T {
        self.data[(z * self.dims[1] + y) * self.dims[2] + x]
    }

    pub fn set(&mut self, z: usize, y: usize, x: usize, v: T) {
        let [_, h, w] = self.dims;
        self.data[(z * h + y) * w + x] = v;
    }

    /// Row-major plane `z`.
    pub fn slice(&self, z: usize) -> &[T] {
        let plane = self.dims[1] * self.dims[2];
        &self.data[z * plane..(z + 1) * plane]
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Volume<U> {
        Volume { dims: self.dims, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Stacks equally sized planes.
    pub fn from_slices(h: usize, w: usize, planes: &[Vec<T>]) -> Result<Self, TensorError> {
        let mut data = Vec::with_capacity(planes.len() * h * w);
        for p in planes {
            if p.len() != h * w {
                return Err(TensorError::DataLength { expected: h * w, actual: p.len() });
            }
            data.extend_from_slice(p);
        }
        Self::new([planes.len(), h, w], data)
    }
}

impl Volume<u8> {
    /// Binary mask of voxels equal to `class`.
    pub fn mask(&self, class: u8) -> Volume<bool> {
        self.map(|v| v == class)
    }
}

/// Labeled cardiac phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "ED")]
    Ed,
    #[serde(rename = "ES")]
    Es,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ed => "ED",
            Self::Es => "ES",
        })
    }
}

impl std::str::FromStr for Phase {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ED" | "ed" => Ok(Self::Ed),
            "ES" | "es" => Ok(Self::Es),
            other => Err(TensorError::InvalidConfig(format!("unknown phase `{other}`"))),
        }
    }
}
