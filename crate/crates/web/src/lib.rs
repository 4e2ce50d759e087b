//! Browser demo: one simulated metal phantom, rendered in several views.
//!
//! The native [`Scene`] does the work; [`Demo`] is its JavaScript face.

mod scene;

pub use scene::{li_correct, rgba, Scene, View, METAL_RGBA};

use wasm_bindgen::prelude::*;

fn js(e: marforge_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    scene: Scene,
    sweep_psnr: f64,
}

#[wasm_bindgen]
impl Demo {
    /// Simulates phantom `seed` on a `size`×`size` grid.
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize, seed: u32) -> Result<Demo, JsError> {
        if !(16..=256).contains(&size) {
            return Err(JsError::new("size must be between 16 and 256"));
        }
        let scene = Scene::new(size, seed as u64).map_err(js)?;
        Ok(Demo { scene, sweep_psnr: f64::NAN })
    }

    pub fn size(&self) -> usize {
        self.scene.size()
    }

    #[wasm_bindgen(js_name = metalPixels)]
    pub fn metal_pixels(&self) -> usize {
        self.scene.metal_pixels()
    }

    /// RGBA bytes of `view` ("artifact", "reference", "artifact-term", "li")
    /// windowed to `[lo, hi]` HU.
    pub fn render(&self, view: &str, lo: f32, hi: f32) -> Result<Vec<u8>, JsError> {
        let view = parse(view)?;
        self.scene.render(view, (lo, hi)).map_err(js)
    }

    /// PSNR in dB of `view` against the metal-free reference.
    pub fn psnr(&self, view: &str) -> Result<f64, JsError> {
        self.scene.psnr(parse(view)?).map_err(js)
    }

    /// Reconstructs the metal-free phantom from `n_angles` views and returns
    /// RGBA bytes; the PSNR is then available from `sweepPsnr`.
    #[wasm_bindgen(js_name = angleSweep)]
    pub fn angle_sweep(&mut self, n_angles: usize, lo: f32, hi: f32) -> Result<Vec<u8>, JsError> {
        let (img, quality) = self.scene.angle_sweep(n_angles).map_err(js)?;
        self.sweep_psnr = quality;
        rgba(&img, (lo, hi), None).map_err(js)
    }

    #[wasm_bindgen(js_name = sweepPsnr)]
    pub fn sweep_psnr(&self) -> f64 {
        self.sweep_psnr
    }
}

fn parse(view: &str) -> Result<View, JsError> {
    View::parse(view).ok_or_else(|| JsError::new(&format!("unknown view `{view}`")))
}
