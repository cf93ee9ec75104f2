use crate::FeatureMap;

/// Leaky-ReLU slope used throughout the generator.
pub const DEFAULT_LEAKY_SLOPE: f32 = 0.1;

pub fn leaky_relu(x: &FeatureMap, slope: f32) -> FeatureMap {
    x.map(|v| if v >= 0.0 { v } else { v * slope })
}

pub fn leaky_relu_inplace(x: &mut FeatureMap, slope: f32) {
    for v in x.data_mut() {
        if *v < 0.0 {
            *v *= slope;
        }
    }
}

pub fn tanh_act(x: &FeatureMap) -> FeatureMap {
    x.map(f32::tanh)
}
