//! What the owner and the attacker do from outside the scooter: riding,
//! charging, delivering images, resets, payment.

use serde_json::json;

use super::world::{Action, World};
use crate::attacks::images::{
    capabilities_for, fresh_unlock_code, malicious_bctrl_image, recovery_bctrl_image,
    stock_bctrl_image, vendor_bts_image, MALICIOUS_BCTRL_VERSION, STOCK_BCTRL_VERSION,
};
use crate::bus::{cmd, NodeId, PacketType, UartFrame};
use crate::simkern::{Attack, Countermeasure, EventKind, LogNode, Millis};

/// When the attacker pushes the malicious image after gaining access.
pub const DELIVERY_MS: Millis = 100;
pub const UTI_LEVEL_PCT: f64 = 45.0;
pub const UTI_MILEAGE_KM: u16 = 433;
pub const UTI_RESET_MS: Millis = 30_000;
pub const UTI_BTS_UPDATE_MS: Millis = 50_000;
pub const UTI_BTS_UPDATE_VERSION: &str = "1.5.6";
pub const DES_LEVEL_PCT: f64 = 50.0;
pub const DES2_RETRY_MS: Millis = 10_000;
pub const DES4_UNLOCK_PERIOD_MS: Millis = 5_000;
pub const DES5_CHARGER_MS: Millis = 5_000;
pub const DES7_POWER_OFF_MS: Millis = 2_000;
/// Rider only stops once the scooter reads 0% and refuses to move.
pub const UBR_MIN_RIDE_MS: Millis = 10_000;

/// Progress through the paid recovery.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Recovery {
    #[default]
    Waiting,
    Unlocking,
    RecoveryFlash,
    Charging,
    StockFlash,
    Done,
}

#[derive(Debug, Clone, Default)]
pub struct UserScript {
    pub attack: Attack,
    pub unlock_code: Option<[u8; 16]>,
    pub recovery: Recovery,
    pub next_unlock: Millis,
    pub user_off_at: Option<Millis>,
    /// Pack charge drawn at the moment the owner switched the scooter off.
    pub drawn_at_off: f64,
}

impl UserScript {
    pub fn for_attack(attack: Attack) -> Self {
        Self {
            attack,
            ..Self::default()
        }
    }

    fn encrypt(w: &World) -> bool {
        w.cfg.countermeasures.has(Countermeasure::C1)
    }

    pub fn setup(&mut self, w: &mut World, baseline: bool) {
        match self.attack {
            Attack::None | Attack::Ubr => {
                w.at(0, Action::PowerOn);
                w.at(0, Action::StartRiding);
            }
            Attack::Uti => {
                w.pack.set_level(UTI_LEVEL_PCT);
                w.drv.set_mileage(UTI_MILEAGE_KM);
                w.at(0, Action::PowerOn);
                w.at(UTI_RESET_MS, Action::FactoryReset);
                let img = vendor_bts_image(UTI_BTS_UPDATE_VERSION, &w.keys.vendor).to_bytes();
                w.at(UTI_BTS_UPDATE_MS, Action::Deliver(img));
            }
            Attack::Plr => {
                w.pack.set_level(DES_LEVEL_PCT);
                w.at(0, Action::PowerOn);
            }
            Attack::Des(n) => {
                w.pack.set_level(DES_LEVEL_PCT);
                w.at(0, Action::PowerOn);
                match n {
                    2 => {
                        let mut t = DES2_RETRY_MS;
                        while t < w.cfg.duration_ms {
                            w.at(t, Action::PowerOn);
                            t += DES2_RETRY_MS;
                        }
                    }
                    4 => w.at(0, Action::StartRiding),
                    5 => w.at(DES5_CHARGER_MS, Action::ConnectCharger),
                    7 => {
                        w.at(DES7_POWER_OFF_MS, Action::PowerOff);
                        self.user_off_at = Some(DES7_POWER_OFF_MS);
                    }
                    _ => {}
                }
            }
        }
        if self.attack == Attack::None || baseline {
            return;
        }
        let code = fresh_unlock_code(&mut w.rng);
        let serial = w.bctrl.serial.clone();
        w.authority.register(&serial, code);
        self.unlock_code = Some(code);
        let img = malicious_bctrl_image(
            self.attack,
            &capabilities_for(self.attack),
            code,
            Self::encrypt(w),
            &w.keys.attacker,
        );
        w.log.append(
            0,
            LogNode::Attacker,
            EventKind::AttackPhase,
            json!({"step": "authorized-access", "attack": self.attack}),
        );
        w.at(DELIVERY_MS, Action::Deliver(img.to_bytes()));
    }

    pub fn on_tick(&mut self, w: &mut World, t: Millis) {
        // A rejected malicious image ends the attack.
        if self.attack != Attack::None && self.unlock_code.is_some() {
            if let Some(r) = w
                .installs
                .iter()
                .find(|r| !r.accepted && r.version == MALICIOUS_BCTRL_VERSION)
            {
                let why = format!("install rejected: {}", r.reason.clone().unwrap_or_default());
                w.stop(&why);
                return;
            }
        }
        match self.attack {
            Attack::Ubr => self.ubr(w, t),
            Attack::Des(4) => {
                if t >= self.next_unlock && w.drv.powered && w.bts.powered {
                    self.next_unlock = t + DES4_UNLOCK_PERIOD_MS;
                    w.send(
                        NodeId::BTS,
                        UartFrame::new(
                            NodeId::BTS,
                            NodeId::DRV,
                            PacketType::Write,
                            cmd::UNLOCK,
                            vec![],
                        ),
                    );
                }
            }
            Attack::Des(7) if self.user_off_at == Some(t) => {
                self.drawn_at_off = w.pack.drawn_mah;
            }
            _ => {}
        }
    }

    fn ubr(&mut self, w: &mut World, t: Millis) {
        if w.riding && t >= UBR_MIN_RIDE_MS && w.drv.powered && w.drv.batt_level == 0 {
            w.riding = false;
            w.log.append(
                t,
                LogNode::Kernel,
                EventKind::Warning,
                json!({"user": "stopped riding", "battlevel": 0}),
            );
            w.at(t, Action::ConnectCharger);
        }
        let Some(pay_at) = w.cfg.pay_at_ms else {
            return;
        };
        let encrypt = Self::encrypt(w);
        match self.recovery {
            Recovery::Waiting if t >= pay_at => {
                let serial = w.bctrl.serial.clone();
                let code = w
                    .authority
                    .simulate_payment(&serial)
                    .and_then(|_| w.authority.unlock_firmware(&serial));
                match code {
                    Ok(code) => {
                        w.log.append(
                            t,
                            LogNode::Authority,
                            EventKind::Unlock,
                            json!({"paid": true, "serial": serial}),
                        );
                        if !w.bts.powered {
                            w.power_on(t);
                        }
                        w.send(
                            NodeId::BTS,
                            UartFrame::new(
                                NodeId::BTS,
                                NodeId::BCTRL,
                                PacketType::Write,
                                cmd::UNLOCK_CODE,
                                code.to_vec(),
                            ),
                        );
                        self.recovery = Recovery::Unlocking;
                    }
                    Err(e) => {
                        w.log.append(
                            t,
                            LogNode::Authority,
                            EventKind::Warning,
                            json!({"unlock": e.to_string()}),
                        );
                        self.recovery = Recovery::Done;
                    }
                }
            }
            Recovery::Unlocking if w.bctrl.can_fw_update => {
                let img = recovery_bctrl_image(encrypt, &w.keys.vendor).to_bytes();
                w.at(t, Action::Deliver(img));
                self.recovery = Recovery::RecoveryFlash;
            }
            Recovery::RecoveryFlash if w.bctrl.recovery => {
                // Switching off clears the spoofed lock and lights, whose
                // draw would otherwise exceed the charger.
                w.at(t, Action::PowerOff);
                if !w.charger_present {
                    w.at(t, Action::ConnectCharger);
                }
                self.recovery = Recovery::Charging;
            }
            Recovery::Charging => {
                let above = w
                    .pack
                    .min_live_voltage()
                    .is_some_and(|v| v > w.pack.thresholds.c_uvt as f64);
                if above && w.charging {
                    if !w.bts.powered {
                        w.power_on(t);
                    }
                    let img = stock_bctrl_image(encrypt, &w.keys.vendor).to_bytes();
                    w.at(t, Action::Deliver(img));
                    self.recovery = Recovery::StockFlash;
                }
            }
            Recovery::StockFlash if !w.bctrl.recovery && w.bctrl.fwver == STOCK_BCTRL_VERSION => {
                w.log.append(
                    t,
                    LogNode::Kernel,
                    EventKind::Summary,
                    json!({"phase": "recovered", "fwver": w.bctrl.fwver}),
                );
                self.recovery = Recovery::Done;
            }
            _ => {}
        }
    }
}
