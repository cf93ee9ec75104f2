//! Numeric kernels the generator graph is assembled from.
//!
//! All kernels are pure functions over immutable inputs. Work is split into
//! shape-determined column chunks which may run on the current rayon pool;
//! the chunking never depends on the thread count, so results are
//! bit-identical for any pool size.

mod activation;
mod conv;
mod gemm;
mod pitch;
mod transposed;

pub use activation::{leaky_relu, leaky_relu_inplace, tanh_act, DEFAULT_LEAKY_SLOPE};
pub use conv::{conv1d, Conv1d, ConvSpec, Padding};
pub use pitch::{compute_dilation_schedule, dilation_for, pd_conv1d, Dilation, DilationSchedule, F0_FLOOR_HZ};
pub use transposed::{transposed_conv1d, TransposedConv1d, TransposedSpec};
