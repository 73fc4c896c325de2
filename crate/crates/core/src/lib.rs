//! Fractional volatility models, absolute-moment Hurst estimation, and the
//! measurement-noise and smoothing-error corrections of volatility proxies.

// `!(x > 0.0)` guards reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod filters;
pub mod fractional;
pub mod ingest;
pub mod moments;
pub mod noisecal;
pub mod proxies;
pub mod rng;
pub mod series;
pub mod volmodels;

pub use error::{Error, ErrorCategory, Result};
pub use filters::{FilterConfig, FilterVariant};
pub use fractional::{FbmParams, FgnMethod, FgnSampler, FouParams};
pub use ingest::{BarSchema, IngestReport, MinuteBarRecord, TradingCalendarConfig};
pub use moments::{CurvePoint, HurstEstimate, LogLogCurve, ScaleWindow};
pub use noisecal::SmoothingSpec;
pub use proxies::{DailyProxySeries, ProxyKind};
pub use series::{PathKind, PathSeries};
pub use volmodels::{GbmVarianceParams, NoiseSpec, RfsvParams};
