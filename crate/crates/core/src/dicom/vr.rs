use std::fmt;
use std::str::FromStr;

use super::Error;

/// Value representation of a data element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Vr {
    AE,
    CS,
    DA,
    DS,
    DT,
    FD,
    FL,
    IS,
    LO,
    LT,
    OB,
    OW,
    PN,
    SH,
    SL,
    SQ,
    SS,
    ST,
    TM,
    UI,
    UL,
    UN,
    US,
    UT,
}

/// How an odd-length value is brought to even length.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    Space,
    Null,
    /// Fixed-width binary; an odd length is an encoding error.
    None,
}

impl Vr {
    pub const ALL: [Vr; 24] = [
        Vr::AE,
        Vr::CS,
        Vr::DA,
        Vr::DS,
        Vr::DT,
        Vr::FD,
        Vr::FL,
        Vr::IS,
        Vr::LO,
        Vr::LT,
        Vr::OB,
        Vr::OW,
        Vr::PN,
        Vr::SH,
        Vr::SL,
        Vr::SQ,
        Vr::SS,
        Vr::ST,
        Vr::TM,
        Vr::UI,
        Vr::UL,
        Vr::UN,
        Vr::US,
        Vr::UT,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Vr::AE => "AE",
            Vr::CS => "CS",
            Vr::DA => "DA",
            Vr::DS => "DS",
            Vr::DT => "DT",
            Vr::FD => "FD",
            Vr::FL => "FL",
            Vr::IS => "IS",
            Vr::LO => "LO",
            Vr::LT => "LT",
            Vr::OB => "OB",
            Vr::OW => "OW",
            Vr::PN => "PN",
            Vr::SH => "SH",
            Vr::SL => "SL",
            Vr::SQ => "SQ",
            Vr::SS => "SS",
            Vr::ST => "ST",
            Vr::TM => "TM",
            Vr::UI => "UI",
            Vr::UL => "UL",
            Vr::UN => "UN",
            Vr::US => "US",
            Vr::UT => "UT",
        }
    }

    pub fn from_bytes(b: [u8; 2]) -> Option<Vr> {
        std::str::from_utf8(&b).ok()?.parse().ok()
    }

    /// Explicit VR elements with a 2-byte reserved field and a 4-byte length.
    pub fn has_long_length(self) -> bool {
        matches!(self, Vr::OB | Vr::OW | Vr::SQ | Vr::UN | Vr::UT)
    }

    pub fn is_text(self) -> bool {
        matches!(
            self,
            Vr::AE
                | Vr::CS
                | Vr::DA
                | Vr::DS
                | Vr::DT
                | Vr::IS
                | Vr::LO
                | Vr::LT
                | Vr::PN
                | Vr::SH
                | Vr::ST
                | Vr::TM
                | Vr::UI
                | Vr::UT
        )
    }

    pub fn padding(self) -> Padding {
        match self {
            Vr::UI | Vr::OB | Vr::UN => Padding::Null,
            v if v.is_text() => Padding::Space,
            _ => Padding::None,
        }
    }
}

impl fmt::Display for Vr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Vr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Vr::ALL
            .iter()
            .copied()
            .find(|v| v.code() == s)
            .ok_or_else(|| Error::UnknownVr(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn long_length_set() {
        for vr in Vr::ALL {
            let long = matches!(vr, Vr::OB | Vr::OW | Vr::SQ | Vr::UN | Vr::UT);
            assert_eq!(vr.has_long_length(), long, "{vr}");
        }
    }

    #[test]
    fn code_round_trip() {
        for vr in Vr::ALL {
            assert_eq!(vr.code().parse::<Vr>().unwrap(), vr);
            let b = vr.code().as_bytes();
            assert_eq!(Vr::from_bytes([b[0], b[1]]), Some(vr));
        }
        assert!("ZZ".parse::<Vr>().is_err());
    }
}
