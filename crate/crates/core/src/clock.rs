//! Monotonic wall-clock measurement that degrades to zero on targets
//! without a usable `Instant` (wasm32), where latency accounting is
//! meaningless anyway.

#[derive(Debug)]
pub struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    started: std::time::Instant,
}

impl Stopwatch {
    pub fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            started: std::time::Instant::now(),
        }
    }

    #[cfg(not(target_arch = "wasm32"))]
    pub fn elapsed_s(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    #[cfg(target_arch = "wasm32")]
    pub fn elapsed_s(&self) -> f64 {
        0.0
    }
}
