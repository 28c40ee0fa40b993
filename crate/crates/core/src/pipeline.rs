//! Uniform entry point over the fitting algorithms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fastfca::{fastfca_fit, fastfca_separate, ica_mode_fit, NmfFlavor};
use crate::fastmnmf::{
    fastmnmf_fit, fastmnmf_init_from_fastfca, fastmnmf_separate, FastMnmfParams, DEFAULT_COMPONENTS,
};
use crate::fca::{fca_fit, fca_separate, EmPowerUsage, FcaAlgorithm};
use crate::init::Initialization;
use crate::linalg::CMat;
use crate::model::{FastFcaParams, FcaParams, SampleCovSet};
use crate::stft::Spectrogram;

/// Iterations of the IS-NMF used to warm-start FastMNMF.
const NMF_WARM_ITERS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    FcaEm,
    FcaMm,
    FastfcaEm,
    #[default]
    FastfcaMm,
    Fastmnmf,
    Ica,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::FcaEm,
        Method::FcaMm,
        Method::FastfcaEm,
        Method::FastfcaMm,
        Method::Fastmnmf,
        Method::Ica,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::FcaEm => "fca-em",
            Method::FcaMm => "fca-mm",
            Method::FastfcaEm => "fastfca-em",
            Method::FastfcaMm => "fastfca-mm",
            Method::Fastmnmf => "fastmnmf",
            Method::Ica => "ica",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

/// Fitted parameters of whichever model a method estimates.
#[derive(Debug, Clone)]
pub enum Estimate {
    Fca(FcaParams),
    FastFca(FastFcaParams),
    FastMnmf(FastMnmfParams),
}

impl Estimate {
    /// SCMs indexed `[i][n]`.
    pub fn scms(&self) -> Result<Vec<Vec<CMat>>> {
        match self {
            Estimate::Fca(p) => Ok(p.bins.iter().map(|b| b.scms.clone()).collect()),
            Estimate::FastFca(p) => p.bins.iter().map(|b| b.scms()).collect(),
            Estimate::FastMnmf(p) => p.to_fastfca().bins.iter().map(|b| b.scms()).collect(),
        }
    }

    /// Multichannel Wiener estimates of the source images; `block_size` is the
    /// number of frames sharing one power value.
    pub fn separate(&self, spec: &Spectrogram, block_size: usize) -> Result<Vec<Spectrogram>> {
        match self {
            Estimate::Fca(p) => fca_separate(spec, &p.expand_blocks(block_size, spec.frames())),
            Estimate::FastFca(p) => fastfca_separate(spec, p, block_size),
            Estimate::FastMnmf(p) => fastmnmf_separate(spec, p, block_size),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: Method,
    pub estimate: Estimate,
    /// Initial value followed by one entry per iteration.
    pub nll_trace: Vec<f64>,
}

pub fn run_method(
    method: Method,
    covs: &SampleCovSet,
    init: &Initialization,
    iters: usize,
    seed: u64,
) -> Result<MethodRun> {
    let (estimate, nll_trace) = match method {
        Method::FcaEm | Method::FcaMm => {
            let algo = if method == Method::FcaEm {
                FcaAlgorithm::Em(EmPowerUsage::Updated)
            } else {
                FcaAlgorithm::Mm
            };
            let fit = fca_fit(covs, &init.fca, algo, iters)?;
            (Estimate::Fca(fit.params), fit.nll_trace)
        }
        Method::FastfcaEm | Method::FastfcaMm => {
            let flavor = if method == Method::FastfcaEm {
                NmfFlavor::Em
            } else {
                NmfFlavor::Mm
            };
            let fit = fastfca_fit(covs, &init.fastfca, flavor, iters)?;
            (Estimate::FastFca(fit.params), fit.nll_trace)
        }
        Method::Fastmnmf => {
            let start = fastmnmf_init_from_fastfca(&init.fastfca, DEFAULT_COMPONENTS, NMF_WARM_ITERS, seed)?;
            let fit = fastmnmf_fit(covs, &start, iters)?;
            (Estimate::FastMnmf(fit.params), fit.nll_trace)
        }
        Method::Ica => {
            let w: Vec<CMat> = init.fastfca.bins.iter().map(|b| b.w.clone()).collect();
            let fit = ica_mode_fit(covs, &w, iters)?;
            (Estimate::FastFca(fit.params), fit.nll_trace)
        }
    };
    Ok(MethodRun {
        method,
        estimate,
        nll_trace,
    })
}
