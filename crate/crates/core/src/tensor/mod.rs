//! Dense tensors, a reverse-mode tape with the primitives the model needs,
//! and the Adam optimizer.

mod adam;
mod dense;
mod scalar;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use dense::Tensor;
pub use scalar::Scalar;
pub use tape::{Fault, Gradients, Index, Tape, Var};

/// Row-wise softmax outside the tape (prediction distributions).
pub fn softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().fold(T::neg_infinity(), |m, v| m.max(*v));
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests;
