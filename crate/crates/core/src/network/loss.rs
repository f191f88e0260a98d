use serde::{Deserialize, Serialize};

use super::{Scalar, TensorMap};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Mean absolute error.
    #[default]
    L1,
    /// Mean squared error.
    L2,
}

/// Compensated (Neumaier) sum, so finite differences of the loss stay
/// accurate far below the magnitude of the total.
pub(crate) fn neumaier(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn check_dims<T: Scalar>(output: &TensorMap<T>, target: &TensorMap<T>) -> Result<()> {
    if output.dims() != target.dims() {
        return Err(Error::Argument(format!(
            "output dims {:?} differ from target {:?}",
            output.dims(),
            target.dims()
        )));
    }
    Ok(())
}

pub fn loss_value<T: Scalar>(kind: LossKind, output: &TensorMap<T>, target: &TensorMap<T>) -> Result<f64> {
    check_dims(output, target)?;
    let n = output.data().len() as f64;
    let diffs = output.data().iter().zip(target.data()).map(|(o, t)| o.to_f64() - t.to_f64());
    let total = match kind {
        LossKind::L1 => neumaier(diffs.map(f64::abs)),
        LossKind::L2 => neumaier(diffs.map(|d| d * d)),
    };
    Ok(total / n)
}

/// Loss and its gradient with respect to `output`.
pub fn loss_and_grad<T: Scalar>(
    kind: LossKind,
    output: &TensorMap<T>,
    target: &TensorMap<T>,
) -> Result<(f64, TensorMap<T>)> {
    let loss = loss_value(kind, output, target)?;
    let n = output.data().len() as f64;
    let grad = TensorMap::new(
        output.channels(),
        output.height(),
        output.width(),
        output
            .data()
            .iter()
            .zip(target.data())
            .map(|(o, t)| {
                let d = o.to_f64() - t.to_f64();
                T::from_f64(match kind {
                    LossKind::L1 => {
                        if d > 0.0 {
                            1.0 / n
                        } else if d < 0.0 {
                            -1.0 / n
                        } else {
                            0.0
                        }
                    }
                    LossKind::L2 => 2.0 * d / n,
                })
            })
            .collect(),
    )?;
    Ok((loss, grad))
}
