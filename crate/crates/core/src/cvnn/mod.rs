//! Complex-valued network core: tensors, layers, losses, Adam, gradient
//! checking, and the real/complex wiring schemes.

mod adam;
mod arch;
mod checkpoint;
mod gradcheck;
mod layers;
mod loss;
mod param;
mod scalar;
mod tensor;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use arch::{CoreNet, Wired};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use gradcheck::{grad_check, relative_error, run_suite, SuiteEntry};
pub use layers::{
    activate, activate_grad, Activation, ChannelNorm, Conv1d, ConvGeometry, ConvTranspose1d, Linear, PRelu,
    Sigmoid,
};
pub use loss::{loss_eval, loss_value};
pub use param::{Param, ParamView, Parameterized};
pub use scalar::Scalar;
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// How a complex signal is fed to the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArchMode {
    ComplexNet,
    DualReal1,
    DualReal2,
    DualReal1C,
}

impl ArchMode {
    pub const ALL: [ArchMode; 4] = [ArchMode::ComplexNet, ArchMode::DualReal1, ArchMode::DualReal2, ArchMode::DualReal1C];

    pub fn name(self) -> &'static str {
        match self {
            ArchMode::ComplexNet => "ComplexNet",
            ArchMode::DualReal1 => "DualReal1",
            ArchMode::DualReal2 => "DualReal2",
            ArchMode::DualReal1C => "DualReal1C",
        }
    }

    pub fn is_complex(self) -> bool {
        self == ArchMode::ComplexNet
    }

    /// Input channels of the core network.
    pub fn core_channels(self) -> usize {
        if self == ArchMode::DualReal1C {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for ArchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArchMode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown arch mode '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActivationKind {
    ComplexRelu,
    Relu,
    ComplexCardioid,
    ComplexPhaseTanh,
    Hardtanh,
    ComplexPrelu,
    Prelu,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 7] = [
        ActivationKind::ComplexRelu,
        ActivationKind::Relu,
        ActivationKind::ComplexCardioid,
        ActivationKind::ComplexPhaseTanh,
        ActivationKind::Hardtanh,
        ActivationKind::ComplexPrelu,
        ActivationKind::Prelu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::ComplexRelu => "complexReLU",
            ActivationKind::Relu => "ReLU",
            ActivationKind::ComplexCardioid => "complexCardioid",
            ActivationKind::ComplexPhaseTanh => "complexPhaseTanh",
            ActivationKind::Hardtanh => "Hardtanh",
            ActivationKind::ComplexPrelu => "complexPReLU",
            ActivationKind::Prelu => "PReLU",
        }
    }

    pub fn is_complex(self) -> bool {
        matches!(
            self,
            ActivationKind::ComplexRelu
                | ActivationKind::ComplexCardioid
                | ActivationKind::ComplexPhaseTanh
                | ActivationKind::ComplexPrelu
        )
    }

    pub fn compatible_with(self, mode: ArchMode) -> bool {
        self.is_complex() == mode.is_complex()
    }

    /// The counterpart used when switching between complex and real modes.
    pub fn for_mode(self, mode: ArchMode) -> Self {
        use ActivationKind::*;
        match (self, mode.is_complex()) {
            (Relu, true) => ComplexRelu,
            (Prelu, true) => ComplexPrelu,
            (Hardtanh, true) => ComplexPhaseTanh,
            (ComplexRelu | ComplexCardioid, false) => Relu,
            (ComplexPrelu, false) => Prelu,
            (ComplexPhaseTanh, false) => Hardtanh,
            (k, _) => k,
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ActivationKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown activation '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    ComplexMse,
    Mse,
    ComplexLogMse,
    LogMse,
    /// Same formula as [`LossKind::SnrLoss`].
    ComplexSdr,
    L1,
    SnrLoss,
}

impl LossKind {
    pub const ALL: [LossKind; 7] = [
        LossKind::ComplexMse,
        LossKind::Mse,
        LossKind::ComplexLogMse,
        LossKind::LogMse,
        LossKind::ComplexSdr,
        LossKind::L1,
        LossKind::SnrLoss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::ComplexMse => "complexMSE",
            LossKind::Mse => "MSE",
            LossKind::ComplexLogMse => "complexLogMSE",
            LossKind::LogMse => "logMSE",
            LossKind::ComplexSdr => "complexSDR",
            LossKind::L1 => "L1",
            LossKind::SnrLoss => "SNRloss",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown loss '{s}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in ArchMode::ALL {
            assert_eq!(m.name().parse::<ArchMode>().unwrap(), m);
        }
        for k in ActivationKind::ALL {
            assert_eq!(k.name().parse::<ActivationKind>().unwrap(), k);
            assert!(k.for_mode(ArchMode::ComplexNet).compatible_with(ArchMode::ComplexNet));
            assert!(k.for_mode(ArchMode::DualReal1).compatible_with(ArchMode::DualReal1));
        }
        for k in LossKind::ALL {
            assert_eq!(k.name().parse::<LossKind>().unwrap(), k);
        }
        assert!("bogus".parse::<LossKind>().is_err());
    }
}
