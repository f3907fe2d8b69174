//! Seeded generator of NSL-KDD-format sample traffic.
//!
//! The real dataset is distributed separately, so tests, benches and demos
//! synthesize input in the same 43-column layout: a normal baseline plus a
//! handful of classic attack shapes (SYN flood, ICMP flood, scans, password
//! guessing) whose feature distributions echo the real data. Deterministic
//! per seed.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rate(x: f64) -> String {
    format!("{x:.2}")
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.gen_range(0..items.len())]
}

struct Row {
    duration: u64,
    protocol: &'static str,
    service: &'static str,
    flag: &'static str,
    src_bytes: u64,
    dst_bytes: u64,
    hot: u64,
    num_failed_logins: u64,
    logged_in: u8,
    num_compromised: u64,
    is_guest_login: u8,
    count: u64,
    srv_count: u64,
    serror_rate: f64,
    rerror_rate: f64,
    same_srv_rate: f64,
    diff_srv_rate: f64,
    srv_diff_host_rate: f64,
    dst_host_count: u64,
    dst_host_srv_count: u64,
    dst_host_same_srv_rate: f64,
    dst_host_diff_srv_rate: f64,
    dst_host_same_src_port_rate: f64,
    dst_host_serror_rate: f64,
    dst_host_rerror_rate: f64,
    label: &'static str,
}

impl Row {
    fn base(label: &'static str) -> Self {
        Row {
            duration: 0,
            protocol: "tcp",
            service: "http",
            flag: "SF",
            src_bytes: 0,
            dst_bytes: 0,
            hot: 0,
            num_failed_logins: 0,
            logged_in: 0,
            num_compromised: 0,
            is_guest_login: 0,
            count: 1,
            srv_count: 1,
            serror_rate: 0.0,
            rerror_rate: 0.0,
            same_srv_rate: 1.0,
            diff_srv_rate: 0.0,
            srv_diff_host_rate: 0.0,
            dst_host_count: 255,
            dst_host_srv_count: 255,
            dst_host_same_srv_rate: 1.0,
            dst_host_diff_srv_rate: 0.0,
            dst_host_same_src_port_rate: 0.0,
            dst_host_serror_rate: 0.0,
            dst_host_rerror_rate: 0.0,
            label,
        }
    }

    fn render(&self, difficulty: u8) -> String {
        // 43 columns in the built-in schema order. Columns that are zero in
        // virtually all real traffic stay zero here too.
        let fields: Vec<String> = vec![
            self.duration.to_string(),
            self.protocol.to_string(),
            self.service.to_string(),
            self.flag.to_string(),
            self.src_bytes.to_string(),
            self.dst_bytes.to_string(),
            "0".to_string(), // land
            "0".to_string(), // wrong_fragment
            "0".to_string(), // urgent
            self.hot.to_string(),
            self.num_failed_logins.to_string(),
            self.logged_in.to_string(),
            self.num_compromised.to_string(),
            "0".to_string(), // root_shell
            "0".to_string(), // su_attempted
            "0".to_string(), // num_root
            "0".to_string(), // num_file_creations
            "0".to_string(), // num_shells
            "0".to_string(), // num_access_files
            "0".to_string(), // num_outbound_cmds
            "0".to_string(), // is_host_login
            self.is_guest_login.to_string(),
            self.count.to_string(),
            self.srv_count.to_string(),
            rate(self.serror_rate),
            rate(self.serror_rate), // srv_serror_rate tracks serror_rate
            rate(self.rerror_rate),
            rate(self.rerror_rate), // srv_rerror_rate tracks rerror_rate
            rate(self.same_srv_rate),
            rate(self.diff_srv_rate),
            rate(self.srv_diff_host_rate),
            self.dst_host_count.to_string(),
            self.dst_host_srv_count.to_string(),
            rate(self.dst_host_same_srv_rate),
            rate(self.dst_host_diff_srv_rate),
            rate(self.dst_host_same_src_port_rate),
            rate(self.srv_diff_host_rate), // dst_host_srv_diff_host_rate
            rate(self.dst_host_serror_rate),
            rate(self.dst_host_serror_rate), // dst_host_srv_serror_rate
            rate(self.dst_host_rerror_rate),
            rate(self.dst_host_rerror_rate), // dst_host_srv_rerror_rate
            self.label.to_string(),
            difficulty.to_string(),
        ];
        fields.join(",")
    }
}

fn normal_row(rng: &mut ChaCha8Rng) -> Row {
    let mut row = Row::base("normal");
    row.protocol = *pick(rng, &["tcp", "tcp", "tcp", "udp", "icmp"]);
    row.service = match row.protocol {
        "udp" => *pick(rng, &["domain_u", "ntp_u", "other"]),
        "icmp" => "eco_i",
        _ => *pick(rng, &["http", "http", "smtp", "ftp_data", "telnet", "pop_3"]),
    };
    if row.service == "telnet" || row.service == "ftp_data" {
        row.duration = rng.gen_range(1..300);
    }
    row.src_bytes = rng.gen_range(100..3000);
    row.dst_bytes = rng.gen_range(100..20000);
    row.logged_in = u8::from(row.protocol == "tcp" && rng.gen::<f64>() < 0.85);
    row.is_guest_login = u8::from(rng.gen::<f64>() < 0.03);
    row.count = rng.gen_range(1..30);
    row.srv_count = rng.gen_range(1..30);
    row.serror_rate = if rng.gen::<f64>() < 0.05 {
        rng.gen_range(0.0..0.3)
    } else {
        0.0
    };
    row.rerror_rate = if rng.gen::<f64>() < 0.05 {
        rng.gen_range(0.0..0.3)
    } else {
        0.0
    };
    row.same_srv_rate = rng.gen_range(0.8..=1.0);
    row.diff_srv_rate = rng.gen_range(0.0..0.1);
    row.srv_diff_host_rate = rng.gen_range(0.0..0.2);
    row.dst_host_count = rng.gen_range(1..=255);
    row.dst_host_srv_count = rng.gen_range(1..=255);
    row.dst_host_same_srv_rate = rng.gen_range(0.7..=1.0);
    row.dst_host_diff_srv_rate = rng.gen_range(0.0..0.1);
    row.dst_host_same_src_port_rate = rng.gen_range(0.0..0.2);
    row
}

fn neptune_row(rng: &mut ChaCha8Rng) -> Row {
    // SYN flood: half-open connections, no payload, saturated serror rates.
    let mut row = Row::base("neptune");
    row.service = *pick(rng, &["private", "http", "telnet", "finger"]);
    row.flag = *pick(rng, &["S0", "S0", "S0", "REJ"]);
    row.count = rng.gen_range(100..=511);
    row.srv_count = rng.gen_range(1..20);
    row.serror_rate = rng.gen_range(0.9..=1.0);
    row.same_srv_rate = rng.gen_range(0.0..0.1);
    row.diff_srv_rate = rng.gen_range(0.05..0.1);
    row.dst_host_count = 255;
    row.dst_host_srv_count = rng.gen_range(1..30);
    row.dst_host_same_srv_rate = rng.gen_range(0.0..0.1);
    row.dst_host_diff_srv_rate = rng.gen_range(0.05..0.1);
    row.dst_host_serror_rate = rng.gen_range(0.9..=1.0);
    row
}

fn smurf_row(rng: &mut ChaCha8Rng) -> Row {
    // ICMP echo flood: fixed-size echo replies to a broadcast victim.
    let mut row = Row::base("smurf");
    row.protocol = "icmp";
    row.service = "ecr_i";
    row.src_bytes = 1032;
    row.count = rng.gen_range(200..=511);
    row.srv_count = row.count;
    row.dst_host_count = 255;
    row.dst_host_srv_count = 255;
    row.dst_host_same_src_port_rate = rng.gen_range(0.9..=1.0);
    row
}

fn portsweep_row(rng: &mut ChaCha8Rng) -> Row {
    // Port scan: many rejected probes across services.
    let mut row = Row::base("portsweep");
    row.service = *pick(rng, &["private", "other", "http", "ftp"]);
    row.flag = *pick(rng, &["REJ", "RSTR", "SH"]);
    row.src_bytes = rng.gen_range(0..20);
    row.count = rng.gen_range(1..10);
    row.srv_count = rng.gen_range(1..5);
    row.rerror_rate = rng.gen_range(0.7..=1.0);
    row.same_srv_rate = rng.gen_range(0.0..0.2);
    row.diff_srv_rate = rng.gen_range(0.5..=1.0);
    row.srv_diff_host_rate = rng.gen_range(0.3..0.8);
    row.dst_host_count = rng.gen_range(100..=255);
    row.dst_host_srv_count = rng.gen_range(1..20);
    row.dst_host_same_srv_rate = rng.gen_range(0.0..0.2);
    row.dst_host_diff_srv_rate = rng.gen_range(0.5..=1.0);
    row.dst_host_rerror_rate = rng.gen_range(0.7..=1.0);
    row
}

fn satan_row(rng: &mut ChaCha8Rng) -> Row {
    // Vulnerability sweep: mixed probes, partial rejections.
    let mut row = Row::base("satan");
    row.protocol = *pick(rng, &["tcp", "tcp", "udp"]);
    row.service = *pick(rng, &["private", "domain_u", "other", "finger"]);
    row.flag = *pick(rng, &["SF", "REJ", "RSTR"]);
    row.src_bytes = rng.gen_range(0..100);
    row.count = rng.gen_range(10..120);
    row.srv_count = rng.gen_range(1..15);
    row.rerror_rate = rng.gen_range(0.4..0.9);
    row.same_srv_rate = rng.gen_range(0.0..0.3);
    row.diff_srv_rate = rng.gen_range(0.4..=1.0);
    row.srv_diff_host_rate = rng.gen_range(0.2..0.6);
    row.dst_host_count = rng.gen_range(100..=255);
    row.dst_host_srv_count = rng.gen_range(1..40);
    row.dst_host_same_srv_rate = rng.gen_range(0.0..0.3);
    row.dst_host_diff_srv_rate = rng.gen_range(0.4..=1.0);
    row.dst_host_rerror_rate = rng.gen_range(0.4..0.9);
    row
}

fn guess_passwd_row(rng: &mut ChaCha8Rng) -> Row {
    // Password guessing over telnet/ftp: repeated failed logins.
    let mut row = Row::base("guess_passwd");
    row.service = *pick(rng, &["telnet", "ftp", "pop_3"]);
    row.duration = rng.gen_range(1..10);
    row.src_bytes = rng.gen_range(100..300);
    row.dst_bytes = rng.gen_range(100..400);
    row.hot = rng.gen_range(1..3);
    row.num_failed_logins = rng.gen_range(1..6);
    row.num_compromised = u64::from(rng.gen::<f64>() < 0.1);
    row.is_guest_login = u8::from(rng.gen::<f64>() < 0.5);
    row.count = rng.gen_range(1..5);
    row.srv_count = rng.gen_range(1..5);
    row.same_srv_rate = rng.gen_range(0.8..=1.0);
    row.dst_host_count = rng.gen_range(1..30);
    row.dst_host_srv_count = rng.gen_range(1..30);
    row
}

/// Generate `rows` sample records as headerless CSV text.
pub fn generate_csv(rows: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for _ in 0..rows {
        let roll = rng.gen::<f64>();
        let row = if roll < 0.53 {
            normal_row(&mut rng)
        } else if roll < 0.73 {
            neptune_row(&mut rng)
        } else if roll < 0.85 {
            smurf_row(&mut rng)
        } else if roll < 0.91 {
            portsweep_row(&mut rng)
        } else if roll < 0.96 {
            satan_row(&mut rng)
        } else {
            guess_passwd_row(&mut rng)
        };
        let difficulty = rng.gen_range(0..=21u8);
        out.push_str(&row.render(difficulty));
        out.push('\n');
    }
    out
}

/// Write sample records straight to a writer.
pub fn write_csv<W: Write>(mut writer: W, rows: usize, seed: u64) -> std::io::Result<()> {
    writer.write_all(generate_csv(rows, seed).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{binarize_label, parse_dataset, BinaryLabel, DatasetSchema};
    use std::io::Cursor;

    #[test]
    fn generated_rows_parse_under_the_builtin_schema() {
        let schema = DatasetSchema::nsl_kdd();
        let text = generate_csv(500, 42);
        let records = parse_dataset(Cursor::new(text), &schema).unwrap();
        assert_eq!(records.len(), 500);
        let attacks = records
            .iter()
            .filter(|r| binarize_label(r) == BinaryLabel::Attack)
            .count();
        // Both classes present in any reasonably sized draw.
        assert!(attacks > 100 && attacks < 400, "attacks = {attacks}");
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate_csv(100, 7), generate_csv(100, 7));
        assert_ne!(generate_csv(100, 7), generate_csv(100, 8));
    }

    #[test]
    fn every_row_has_43_columns() {
        let text = generate_csv(50, 3);
        for line in text.lines() {
            assert_eq!(line.split(',').count(), 43);
        }
    }
}
