//! File formats: binary event and map containers, PPM images and the text
//! configuration.

mod config;
mod formats;

pub use config::{dump_config, parse_config, parse_config_seeded, read_config, ConfigError, RunConfig};
pub use formats::{
    decode_events, decode_flow, decode_map, encode_events, encode_flow, encode_map, encode_ppm,
    read_events, read_flow, read_map, write_atomic, write_events, write_flow, write_map,
    EventFile, FormatError, EVENT_HEADER_LEN, EVENT_MAGIC, EVENT_RECORD_LEN, FORMAT_VERSION,
    MAP_HEADER_LEN, MAP_MAGIC,
};
