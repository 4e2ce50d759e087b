use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::ParamStore;

use super::estimators::{Discriminator, INet, PNet, SNet, TraceGate};
use super::layers::Initializer;

/// Depths and widths of every network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetworkConfig {
    pub pnet_depth: usize,
    pub pnet_base: usize,
    pub snet_depth: usize,
    pub snet_base: usize,
    pub inet_depth: usize,
    pub inet_base: usize,
    pub max_channels: usize,
    pub disc_base: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            pnet_depth: 3,
            pnet_base: 8,
            snet_depth: 2,
            snet_base: 8,
            inet_depth: 5,
            inet_base: 8,
            max_channels: 32,
            disc_base: 16,
        }
    }
}

/// The five networks and their parameters.
#[derive(Clone, Debug)]
pub struct NetworkSet {
    pub config: NetworkConfig,
    pub pnet: PNet,
    pub snet: SNet,
    pub inet: INet,
    pub disc_a: Discriminator,
    pub disc_c: Discriminator,
    pub pnet_params: ParamStore,
    pub snet_params: ParamStore,
    pub inet_params: ParamStore,
    pub disc_a_params: ParamStore,
    pub disc_c_params: ParamStore,
}

const FILES: [&str; 5] = ["pnet.marf", "snet.marf", "inet.marf", "disc_a.marf", "disc_c.marf"];

impl NetworkSet {
    /// Freshly initialized networks; every network draws from its own stream
    /// of `seed`.
    pub fn new(config: NetworkConfig, gate: TraceGate, seed: u64) -> Result<Self> {
        let c = config;
        let pnet = PNet::new(c.pnet_depth, c.pnet_base, c.max_channels)?;
        let snet = SNet::new(c.snet_depth, c.snet_base, c.max_channels, gate)?;
        let inet = INet::new(c.inet_depth, c.inet_base, c.max_channels)?;
        let disc_a = Discriminator::new("disc_a", c.disc_base, 2)?;
        let disc_c = Discriminator::new("disc_c", c.disc_base, 2)?;
        let mut stores: [ParamStore; 5] = Default::default();
        pnet.init(&mut stores[0], &mut Initializer::new(seed, 10))?;
        snet.init(&mut stores[1], &mut Initializer::new(seed, 11))?;
        inet.init(&mut stores[2], &mut Initializer::new(seed, 12))?;
        disc_a.init(&mut stores[3], &mut Initializer::new(seed, 13))?;
        disc_c.init(&mut stores[4], &mut Initializer::new(seed, 14))?;
        let [pnet_params, snet_params, inet_params, disc_a_params, disc_c_params] = stores;
        Ok(NetworkSet {
            config,
            pnet,
            snet,
            inet,
            disc_a,
            disc_c,
            pnet_params,
            snet_params,
            inet_params,
            disc_a_params,
            disc_c_params,
        })
    }

    fn stores(&self) -> [&ParamStore; 5] {
        [
            &self.pnet_params,
            &self.snet_params,
            &self.inet_params,
            &self.disc_a_params,
            &self.disc_c_params,
        ]
    }

    fn stores_mut(&mut self) -> [&mut ParamStore; 5] {
        [
            &mut self.pnet_params,
            &mut self.snet_params,
            &mut self.inet_params,
            &mut self.disc_a_params,
            &mut self.disc_c_params,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.stores().iter().all(|s| s.is_finite())
    }

    /// Writes one parameter file per network into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (store, file) in self.stores().into_iter().zip(FILES) {
            store.save(dir.join(file))?;
        }
        Ok(())
    }

    /// Replaces parameters with those saved in `dir`, checking that every
    /// tensor matches the configured architecture.
    pub fn load(&mut self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for (store, file) in self.stores_mut().into_iter().zip(FILES) {
            let loaded = ParamStore::load(dir.join(file))?;
            check_compatible(store, &loaded, file)?;
            *store = loaded;
        }
        Ok(())
    }

    /// Replaces only the P-Net parameters.
    pub fn load_pnet(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let loaded = ParamStore::load(path)?;
        check_compatible(&self.pnet_params, &loaded, "pnet")?;
        self.pnet_params = loaded;
        Ok(())
    }
}

fn check_compatible(expected: &ParamStore, loaded: &ParamStore, what: &str) -> Result<()> {
    let a: Vec<_> = expected.names().collect();
    let b: Vec<_> = loaded.names().collect();
    if a != b {
        return Err(Error::Config(format!(
            "{what}: checkpoint parameters do not match the configured network"
        )));
    }
    for name in a {
        let (x, y) = (expected.get(name).unwrap().shape(), loaded.get(name).unwrap().shape());
        if x != y {
            return Err(Error::Config(format!("{what}: `{name}` is {y} in the checkpoint, expected {x}")));
        }
    }
    Ok(())
}
