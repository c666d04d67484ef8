//! Event-camera forward model: log-intensity mapping, contrast-threshold
//! event generation, background-activity noise, the density filter that
//! removes it, and accumulation into per-pixel maps.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{invalid, Result};
use crate::math::{self, seconds_to_us};
use crate::raster::Image;

/// A single polarity event. Timestamps are integer microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    /// `+1` or `-1`.
    pub polarity: i8,
}

/// Time-ordered events from one sensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub width: u32,
    pub height: u32,
    pub events: Vec<Event>,
}

impl EventStream {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, events: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Checks bounds, polarity values and time ordering.
    pub fn validate(&self) -> Result<()> {
        let mut last = 0;
        for (i, e) in self.events.iter().enumerate() {
            if e.x as u32 >= self.width || e.y as u32 >= self.height {
                return Err(invalid(alloc::format!("event {i} lies outside the sensor")));
            }
            if e.polarity != 1 && e.polarity != -1 {
                return Err(invalid(alloc::format!("event {i} has polarity {}", e.polarity)));
            }
            if e.t < last {
                return Err(invalid(alloc::format!("event {i} is out of time order")));
            }
            last = e.t;
        }
        Ok(())
    }

    /// Stable time sort; ties keep their relative order.
    pub fn sort(&mut self) {
        self.events.sort_by_key(|e| e.t);
    }
}

/// Scalar constants of the sensor model and the log mapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventModelParams {
    /// Contrast threshold (log-intensity units).
    pub epsilon: f64,
    /// Offset inside the sensor's log.
    pub c: f64,
    /// Gamma applied before the log.
    pub gamma: f64,
    /// Offset of the log mapping used for predicted and supervisory maps.
    pub kappa: f64,
    /// Accumulation window in seconds.
    pub window: f64,
}

impl Default for EventModelParams {
    fn default() -> Self {
        Self { epsilon: 0.2, c: 1e-5, gamma: 2.2, kappa: 1e-5, window: 0.008 }
    }
}

impl EventModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.kappa > 0.0 && self.gamma > 0.0 && self.c >= 0.0 && self.window > 0.0) {
            return Err(invalid("event model parameters out of range"));
        }
        Ok(())
    }

    /// `log(v^g + κ)`
    #[inline]
    pub fn log_intensity(&self, v: f64) -> f64 {
        math::ln(math::powf(v, self.gamma) + self.kappa)
    }

    /// Derivative of [`Self::log_intensity`] for `v ≥ 0`.
    #[inline]
    pub fn log_intensity_grad(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        let p = math::powf(v, self.gamma - 1.0);
        self.gamma * p / (p * v + self.kappa)
    }

    #[inline]
    fn sensor_log(&self, v: f64) -> f64 {
        math::ln(math::powf(v, self.gamma) + self.c)
    }
}

/// Units carried by an [`EventMap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapUnits {
    /// Signed integer event counts.
    Counts,
    /// Log-intensity differences.
    LogIntensity,
}

/// Per-pixel scalar map, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EventMap {
    pub width: u32,
    pub height: u32,
    pub units: MapUnits,
    pub values: Vec<f64>,
}

impl EventMap {
    pub fn zeros(width: u32, height: u32, units: MapUnits) -> Self {
        Self { width, height, units, values: vec![0.0; width as usize * height as usize] }
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn check_compatible(&self, other: &EventMap) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(invalid("event map dimensions differ"));
        }
        if self.units != other.units {
            return Err(invalid("event map units differ"));
        }
        Ok(())
    }
}

/// `L(I) = log(Y(I)^g + κ)` on the luminance plane.
pub fn log_map(img: &Image, params: &EventModelParams) -> EventMap {
    EventMap {
        width: img.width,
        height: img.height,
        units: MapUnits::LogIntensity,
        values: img.luminance().into_iter().map(|v| params.log_intensity(v)).collect(),
    }
}

/// `L(I2) - L(I1)`.
pub fn predicted_event_map(i1: &Image, i2: &Image, params: &EventModelParams) -> Result<EventMap> {
    i1.check_same_shape(i2)?;
    let a = log_map(i1, params);
    let b = log_map(i2, params);
    Ok(EventMap {
        width: i1.width,
        height: i1.height,
        units: MapUnits::LogIntensity,
        values: b.values.iter().zip(&a.values).map(|(b, a)| b - a).collect(),
    })
}

/// Events triggered by the brightness change from `prev` to `next`.
///
/// Each pixel whose log change Δ reaches the threshold emits
/// `floor(|Δ| / ε)` events of sign(Δ), spread evenly over `(t_prev, t_next]`.
pub fn simulate_events(
    prev: &Image,
    next: &Image,
    t_prev: f64,
    t_next: f64,
    params: &EventModelParams,
) -> Result<EventStream> {
    prev.check_same_shape(next)?;
    if !(t_next > t_prev) {
        return Err(invalid("t_next must be after t_prev"));
    }
    params.validate()?;
    let (t0, t1) = (seconds_to_us(t_prev), seconds_to_us(t_next));
    let span = t1 - t0;
    let w = prev.width as usize;
    let mut events = Vec::new();
    for (i, (a, b)) in prev.luminance().into_iter().zip(next.luminance()).enumerate() {
        let delta = params.sensor_log(b) - params.sensor_log(a);
        let n = math::floor(delta.abs() / params.epsilon) as u64;
        if n == 0 {
            continue;
        }
        let polarity = if delta > 0.0 { 1 } else { -1 };
        let (x, y) = ((i % w) as u16, (i / w) as u16);
        for k in 1..=n {
            // ceil(k·span/n) keeps every timestamp strictly after t_prev.
            let t = t0 + (k * span).div_ceil(n);
            events.push(Event { t, x, y, polarity });
        }
    }
    let mut stream = EventStream { width: prev.width, height: prev.height, events };
    stream.sort();
    Ok(stream)
}

/// Merge uniformly random background-activity events into `stream`.
///
/// The number of injected events is Poisson with mean
/// `rate · (t_end − t_start) · width · height`; pixels, times in
/// `(t_start, t_end]` and polarities are uniform.
pub fn inject_dark_noise(stream: &EventStream, rate: f64, t_start: f64, t_end: f64, seed: u64) -> Result<EventStream> {
    if !(rate >= 0.0) {
        return Err(invalid("noise rate must be non-negative"));
    }
    let mut out = stream.clone();
    let (t0, t1) = (seconds_to_us(t_start), seconds_to_us(t_end));
    let pixels = stream.width as f64 * stream.height as f64;
    let mean = rate * (t1.saturating_sub(t0)) as f64 * 1e-6 * pixels;
    if mean <= 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poisson = Poisson::new(mean).map_err(|_| invalid("noise mean out of range"))?;
    let count = poisson.sample(&mut rng) as u64;
    out.events.reserve(count as usize);
    for _ in 0..count {
        let x = rng.random_range(0..stream.width) as u16;
        let y = rng.random_range(0..stream.height) as u16;
        let t = rng.random_range(t0 + 1..=t1);
        let polarity = if rng.random_bool(0.5) { 1 } else { -1 };
        out.events.push(Event { t, x, y, polarity });
    }
    out.sort();
    Ok(out)
}

/// Density filter settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseFilterParams {
    pub window_us: u64,
    /// Side of the square spatial neighbourhood (odd, ≥ 3).
    pub neighborhood: u32,
    pub min_support: u32,
}

impl Default for NoiseFilterParams {
    fn default() -> Self {
        Self { window_us: 10_000, neighborhood: 3, min_support: 1 }
    }
}

impl NoiseFilterParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_us == 0 {
            return Err(invalid("filter window must be positive"));
        }
        if self.neighborhood < 3 || self.neighborhood % 2 == 0 {
            return Err(invalid("filter neighbourhood must be odd and at least 3"));
        }
        Ok(())
    }
}

/// Keep-mask of the density filter: event `i` survives when at least
/// `min_support` other events fall in its neighbourhood with timestamps in
/// `[t_i − window, t_i]`.
pub fn y_noise_keep_mask(stream: &EventStream, params: &NoiseFilterParams) -> Result<Vec<bool>> {
    params.validate()?;
    let (w, h) = (stream.width as i64, stream.height as i64);
    let r = (params.neighborhood / 2) as i64;
    let ev = &stream.events;
    let mut counts = vec![0u32; (w * h) as usize];
    let (mut head, mut tail) = (0usize, 0usize);
    let mut keep = Vec::with_capacity(ev.len());
    for e in ev {
        while head < ev.len() && ev[head].t <= e.t {
            counts[ev[head].y as usize * w as usize + ev[head].x as usize] += 1;
            head += 1;
        }
        let oldest = e.t.saturating_sub(params.window_us);
        while ev[tail].t < oldest {
            counts[ev[tail].y as usize * w as usize + ev[tail].x as usize] -= 1;
            tail += 1;
        }
        let (cx, cy) = (e.x as i64, e.y as i64);
        let mut support: u32 = 0;
        for y in (cy - r).max(0)..=(cy + r).min(h - 1) {
            for x in (cx - r).max(0)..=(cx + r).min(w - 1) {
                support += counts[(y * w + x) as usize];
            }
        }
        // The event itself is inside the window.
        keep.push(support - 1 >= params.min_support);
    }
    Ok(keep)
}

/// Drop events without spatiotemporal support. Output is a subsequence of the input.
pub fn y_noise_filter(stream: &EventStream, params: &NoiseFilterParams) -> Result<EventStream> {
    let keep = y_noise_keep_mask(stream, params)?;
    Ok(EventStream {
        width: stream.width,
        height: stream.height,
        events: stream.events.iter().zip(keep).filter(|(_, k)| *k).map(|(e, _)| *e).collect(),
    })
}

/// Signed polarity sum per pixel over events with `t1 < t ≤ t2` (seconds).
pub fn accumulate(stream: &EventStream, t1: f64, t2: f64) -> Result<EventMap> {
    if !(t2 > t1) {
        return Err(invalid("accumulation window must have t2 > t1"));
    }
    Ok(accumulate_us(stream, seconds_to_us(t1), seconds_to_us(t2)))
}

/// [`accumulate`] with microsecond bounds.
pub fn accumulate_us(stream: &EventStream, t1: u64, t2: u64) -> EventMap {
    let mut map = EventMap::zeros(stream.width, stream.height, MapUnits::Counts);
    let start = stream.events.partition_point(|e| e.t <= t1);
    for e in stream.events[start..].iter().take_while(|e| e.t <= t2) {
        map.values[e.y as usize * stream.width as usize + e.x as usize] += e.polarity as f64;
    }
    map
}

/// Scale a count map by ε into log-intensity units.
pub fn counts_to_log(map: &EventMap, epsilon: f64) -> Result<EventMap> {
    if map.units != MapUnits::Counts {
        return Err(invalid("counts_to_log expects a counts map"));
    }
    Ok(EventMap {
        width: map.width,
        height: map.height,
        units: MapUnits::LogIntensity,
        values: map.values.iter().map(|v| v * epsilon).collect(),
    })
}
