use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    Agent,
    Default,
}

impl Controller {
    pub fn name(self) -> &'static str {
        match self {
            Controller::Agent => "agent",
            Controller::Default => "default",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetyConfig {
    pub enabled: bool,
    /// Readings at or above this hand control to the default policy.
    pub unsafe_at: f64,
    /// Readings at or below this return control to the agent.
    pub safe_at: f64,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        Self { enabled: true, unsafe_at: 50.0, safe_at: 3.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub t_ms: f64,
    pub to: Controller,
    pub reading: f64,
}

/// Hysteresis switch between the agent and a default policy.
#[derive(Clone, Debug)]
pub struct SafetyMonitor {
    config: SafetyConfig,
    controller: Controller,
    transitions: Vec<Transition>,
}

impl SafetyMonitor {
    pub fn new(config: SafetyConfig) -> Self {
        Self { config, controller: Controller::Agent, transitions: Vec::new() }
    }

    pub fn config(&self) -> SafetyConfig {
        self.config
    }

    pub fn controller(&self) -> Controller {
        self.controller
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Feeds one reading (e.g. the largest queue) and returns who acts next.
    pub fn step(&mut self, t_ms: f64, reading: f64) -> Controller {
        if !self.config.enabled {
            return Controller::Agent;
        }
        let next = match self.controller {
            Controller::Agent if reading >= self.config.unsafe_at => Controller::Default,
            Controller::Default if reading <= self.config.safe_at => Controller::Agent,
            current => current,
        };
        if next != self.controller {
            self.transitions.push(Transition { t_ms, to: next, reading });
            self.controller = next;
        }
        next
    }

    /// Back to agent control without logging (e.g. at an episode reset).
    pub fn reset(&mut self) {
        self.controller = Controller::Agent;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_examples() {
        let mut m = SafetyMonitor::new(SafetyConfig::default());
        assert_eq!(m.step(0.0, 20.0), Controller::Agent);
        assert_eq!(m.step(1.0, 51.0), Controller::Default);
        assert_eq!(m.step(2.0, 20.0), Controller::Default);
        assert_eq!(m.step(3.0, 3.0), Controller::Agent);
        assert_eq!(m.transitions().len(), 2);
    }

    #[test]
    fn disabled_monitor_never_intervenes() {
        let mut m = SafetyMonitor::new(SafetyConfig { enabled: false, ..SafetyConfig::default() });
        assert_eq!(m.step(0.0, 1e9), Controller::Agent);
        assert!(m.transitions().is_empty());
    }
}
