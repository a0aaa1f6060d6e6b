#include "irsce/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "irsce/errors.hpp"
#include "irsce/textio.hpp"

namespace irsce {

NetworkSpec ExperimentConfig::network_spec() const {
    NetworkSpec spec;
    spec.input_rows = geometry.irs_elements + 1;
    spec.input_cols = pilot_count;
    spec.input_channels = 3;
    spec.conv_layers = conv_layers;
    spec.conv_filters = conv_filters;
    spec.kernel_rows = kernel;
    spec.kernel_cols = kernel;
    spec.fc_units = fc_units;
    spec.dropout_keep = dropout_keep;
    spec.output_dim = 2 * geometry.bs_antennas * (geometry.irs_elements + 1);
    return spec;
}

TrainConfig ExperimentConfig::train_config() const {
    TrainConfig tc;
    tc.mode = mode;
    tc.rounds = rounds;
    tc.learning_rate = learning_rate;
    tc.momentum = momentum;
    tc.batch_size = batch_size;
    tc.local_batch = fl_batch_size;
    tc.gradient_snr_db = gradient_snr_db;
    tc.downlink_noise = downlink_noise;
    tc.dropout = dropout;
    tc.threads = threads;
    tc.seed = seed;
    return tc;
}

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& key, const std::string& why) {
        throw ConfigError("config key '" + key + "': " + why);
    };
    if (geometry.bs_antennas < 1) fail("m", "must be >= 1");
    if (geometry.irs_elements < 1) fail("l", "must be >= 1");
    if (geometry.users < 1) fail("k_users", "must be >= 1");
    if (geometry.paths_bs_irs < 1) fail("n_r", "must be >= 1");
    if (geometry.paths_bs_user < 1) fail("n_r_bs", "must be >= 1");
    if (geometry.paths_irs_user < 1) fail("n_r_irs", "must be >= 1");
    if (!(geometry.angle_lo < geometry.angle_hi))
        fail("angle_lo", "angular domain must satisfy angle_lo < angle_hi");
    if (pilot_count < 1 || pilot_count > geometry.bs_antennas)
        fail("m_bar", "must satisfy 1 <= m_bar <= m");
    if (train_snr_db.empty()) fail("train_snr_db", "must list at least one SNR level");
    for (double s : train_snr_db)
        if (std::isnan(s)) fail("train_snr_db", "must not contain NaN");
    if (realizations_per_user < 1) fail("n_realizations", "must be >= 1");
    if (noise_reps < 1) fail("g_reps", "must be >= 1");
    if (!(switch_model.epsilon_on >= 0.0 && switch_model.epsilon_on < 1.0))
        fail("epsilon_on", "must lie in [0, 1)");
    if (!(switch_model.epsilon_off >= 0.0 && switch_model.epsilon_off < 1.0))
        fail("epsilon_off", "must lie in [0, 1)");
    if (conv_layers < 0) fail("conv_layers", "must be >= 0");
    if (conv_filters < 1) fail("conv_filters", "must be >= 1");
    if (kernel < 1 || kernel % 2 == 0) fail("kernel", "must be odd and >= 1");
    if (fc_units < 1) fail("fc_units", "must be >= 1");
    if (!(dropout_keep > 0.0 && dropout_keep <= 1.0)) fail("dropout_keep", "must lie in (0, 1]");
    if (rounds < 1) fail("rounds", "must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        fail("learning_rate", "must be finite and > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum", "must lie in [0, 1)");
    if (batch_size < 1) fail("batch_size", "must be >= 1");
    if (fl_batch_size < 0) fail("fl_batch_size", "must be >= 0 (0 = full local set)");
    if (std::isnan(gradient_snr_db) ||
        gradient_snr_db == -std::numeric_limits<double>::infinity())
        fail("gradient_snr_db", "must be a real value or inf");
    if (threads < 1) fail("threads", "must be >= 1");
    if (trials < 1) fail("trials", "must be >= 1");
    if (eval_snr_db.empty()) fail("eval_snr_db", "must list at least one SNR");
    for (int mb : eval_pilot_counts)
        if (mb < 1 || mb > geometry.bs_antennas)
            fail("eval_m_bar", "entries must satisfy 1 <= m_bar <= m");
    if (dataset_path.empty()) fail("dataset", "must not be empty");
    if (checkpoint_path.empty()) fail("checkpoint", "must not be empty");
    if (round_log_path.empty()) fail("round_log", "must not be empty");
    if (results_path.empty()) fail("results", "must not be empty");
}

namespace {

struct FieldBinding {
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
    bool echoed = true;  // false: execution resource, parse-only
};

int to_int(const std::string& v, const std::string& key) {
    return static_cast<int>(parse_int(v, "config key '" + key + "'"));
}

// Single source of truth for the key set: parsing, serialization and the
// config echo all iterate this table.
const std::vector<std::pair<std::string, FieldBinding>>& bindings() {
    static const std::vector<std::pair<std::string, FieldBinding>> table = [] {
        std::vector<std::pair<std::string, FieldBinding>> t;
        auto add_int = [&t](const std::string& key, int ExperimentConfig::* field) {
            t.push_back({key,
                         {[field, key](ExperimentConfig& c, const std::string& v,
                                       const std::string&) { c.*field = to_int(v, key); },
                          [field](const ExperimentConfig& c) { return std::to_string(c.*field); }}});
        };
        auto add_double = [&t](const std::string& key, double ExperimentConfig::* field) {
            t.push_back({key,
                         {[field, key](ExperimentConfig& c, const std::string& v,
                                       const std::string&) {
                              c.*field = parse_double(v, "config key '" + key + "'");
                          },
                          [field](const ExperimentConfig& c) { return fmt_double(c.*field); }}});
        };
        auto add_bool = [&t](const std::string& key, bool ExperimentConfig::* field) {
            t.push_back({key,
                         {[field, key](ExperimentConfig& c, const std::string& v,
                                       const std::string&) {
                              c.*field = parse_bool(v, "config key '" + key + "'");
                          },
                          [field](const ExperimentConfig& c) {
                              return c.*field ? std::string("true") : std::string("false");
                          }}});
        };
        auto add_string = [&t](const std::string& key, std::string ExperimentConfig::* field) {
            t.push_back({key,
                         {[field](ExperimentConfig& c, const std::string& v, const std::string&) {
                              c.*field = v;
                          },
                          [field](const ExperimentConfig& c) { return c.*field; }}});
        };

        // geometry
        t.push_back({"m",
                     {[](ExperimentConfig& c, const std::string& v, const std::string&) {
                          c.geometry.bs_antennas = to_int(v, "m");
                      },
                      [](const ExperimentConfig& c) {
                          return std::to_string(c.geometry.bs_antennas);
                      }}});
        t.push_back({"l",
                     {[](ExperimentConfig& c, const std::string& v, const std::string&) {
                          c.geometry.irs_elements = to_int(v, "l");
                      },
                      [](const ExperimentConfig& c) {
                          return std::to_string(c.geometry.irs_elements);
                      }}});
        t.push_back({"k_users",
                     {[](ExperimentConfig& c, const std::string& v, const std::string&) {
                          c.geometry.users = to_int(v, "k_users");
                      },
                      [](const ExperimentConfig& c) { return std::to_string(c.geometry.users); }}});
        t.push_back({"n_r",
                     {[](ExperimentConfig& c, const std::string& v, const std::string&) {
                          c.geometry.paths_bs_irs = to_int(v, "n_r");
                      },
                      [](const ExperimentConfig& c) {
                          return std::to_string(c.geometry.paths_bs_irs);
                      }}});
        t.push_back({"n_r_bs",
                     {[](ExperimentConfig& c, const std::string& v, const std::string&) {
                          c.geometry.paths_bs_user = to_int(v, "n_r_bs");
                      },
                      [](const ExperimentConfig& c) {
                          return std::to_string(c.geometry.paths_bs_user);
                      }}});
        t.push_back({"n_r_irs",
                     {[](ExperimentConfig& c, const std::string& v, const std::string&) {
                          c.geometry.paths_irs_user = to_int(v, "n_r_irs");
                      },
                      [](const ExperimentConfig& c) {
                          return std::to_string(c.geometry.paths_irs_user);
                      }}});
        t.push_back({"angle_lo",
                     {[](ExperimentConfig& c, const std::string& v, const std::string&) {
                          c.geometry.angle_lo = parse_double(v, "config key 'angle_lo'");
                      },
                      [](const ExperimentConfig& c) { return fmt_double(c.geometry.angle_lo); }}});
        t.push_back({"angle_hi",
                     {[](ExperimentConfig& c, const std::string& v, const std::string&) {
                          c.geometry.angle_hi = parse_double(v, "config key 'angle_hi'");
                      },
                      [](const ExperimentConfig& c) { return fmt_double(c.geometry.angle_hi); }}});

        // acquisition
        add_int("m_bar", &ExperimentConfig::pilot_count);
        t.push_back({"train_snr_db",
                     {[](ExperimentConfig& c, const std::string& v, const std::string&) {
                          c.train_snr_db = parse_double_list(v, "config key 'train_snr_db'");
                      },
                      [](const ExperimentConfig& c) { return fmt_double_list(c.train_snr_db); }}});
        add_int("n_realizations", &ExperimentConfig::realizations_per_user);
        add_int("g_reps", &ExperimentConfig::noise_reps);
        t.push_back({"epsilon_on",
                     {[](ExperimentConfig& c, const std::string& v, const std::string&) {
                          c.switch_model.epsilon_on = parse_double(v, "config key 'epsilon_on'");
                      },
                      [](const ExperimentConfig& c) {
                          return fmt_double(c.switch_model.epsilon_on);
                      }}});
        t.push_back({"epsilon_off",
                     {[](ExperimentConfig& c, const std::string& v, const std::string&) {
                          c.switch_model.epsilon_off = parse_double(v, "config key 'epsilon_off'");
                      },
                      [](const ExperimentConfig& c) {
                          return fmt_double(c.switch_model.epsilon_off);
                      }}});
        t.push_back({"max_dataset_mb",
                     {[](ExperimentConfig& c, const std::string& v, const std::string&) {
                          c.max_dataset_mb = parse_u64(v, "config key 'max_dataset_mb'");
                      },
                      [](const ExperimentConfig& c) { return std::to_string(c.max_dataset_mb); }}});

        // network
        add_int("conv_layers", &ExperimentConfig::conv_layers);
        add_int("conv_filters", &ExperimentConfig::conv_filters);
        add_int("kernel", &ExperimentConfig::kernel);
        add_int("fc_units", &ExperimentConfig::fc_units);
        add_double("dropout_keep", &ExperimentConfig::dropout_keep);

        // training
        t.push_back({"mode",
                     {[](ExperimentConfig& c, const std::string& v, const std::string&) {
                          c.mode = train_mode_from_string(v);
                      },
                      [](const ExperimentConfig& c) { return to_string(c.mode); }}});
        add_int("rounds", &ExperimentConfig::rounds);
        add_double("learning_rate", &ExperimentConfig::learning_rate);
        add_double("momentum", &ExperimentConfig::momentum);
        add_int("batch_size", &ExperimentConfig::batch_size);
        add_int("fl_batch_size", &ExperimentConfig::fl_batch_size);
        add_double("gradient_snr_db", &ExperimentConfig::gradient_snr_db);
        add_bool("downlink_noise", &ExperimentConfig::downlink_noise);
        add_bool("dropout", &ExperimentConfig::dropout);
        t.push_back({"threads",
                     {[](ExperimentConfig& c, const std::string& v, const std::string&) {
                          c.threads = to_int(v, "threads");
                      },
                      [](const ExperimentConfig& c) { return std::to_string(c.threads); },
                      false}});

        // evaluation
        add_int("trials", &ExperimentConfig::trials);
        t.push_back({"eval_snr_db",
                     {[](ExperimentConfig& c, const std::string& v, const std::string&) {
                          c.eval_snr_db = parse_double_list(v, "config key 'eval_snr_db'");
                      },
                      [](const ExperimentConfig& c) { return fmt_double_list(c.eval_snr_db); }}});
        t.push_back({"eval_m_bar",
                     {[](ExperimentConfig& c, const std::string& v, const std::string&) {
                          c.eval_pilot_counts =
                              v.empty() ? std::vector<int>{}
                                        : parse_int_list(v, "config key 'eval_m_bar'");
                      },
                      [](const ExperimentConfig& c) { return fmt_int_list(c.eval_pilot_counts); }}});
        add_bool("oracle", &ExperimentConfig::oracle);

        t.push_back({"seed",
                     {[](ExperimentConfig& c, const std::string& v, const std::string&) {
                          c.seed = parse_u64(v, "config key 'seed'");
                      },
                      [](const ExperimentConfig& c) { return std::to_string(c.seed); }}});

        add_string("dataset", &ExperimentConfig::dataset_path);
        add_string("checkpoint", &ExperimentConfig::checkpoint_path);
        add_string("round_log", &ExperimentConfig::round_log_path);
        add_string("results", &ExperimentConfig::results_path);
        return t;
    }();
    return table;
}

} // namespace

ExperimentConfig parse_config_text(std::istream& in, const std::string& origin) {
    ExperimentConfig config;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string key, value;
        bool has_kv = false;
        try {
            has_kv = KeyValueBlock::parse_line(line, key, value);
        } catch (const IoError& e) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!has_kv) continue;
        bool known = false;
        for (const auto& [name, binding] : bindings()) {
            if (name == key) {
                binding.set(config, value, origin);
                known = true;
                break;
            }
        }
        if (!known)
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown config key '" +
                              key + "'");
    }
    return config;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    return parse_config_text(in, path);
}

std::vector<std::pair<std::string, std::string>> serialize_config(const ExperimentConfig& config) {
    std::vector<std::pair<std::string, std::string>> out;
    out.reserve(bindings().size());
    for (const auto& [name, binding] : bindings())
        if (binding.echoed) out.emplace_back(name, binding.get(config));
    return out;
}

bool ExperimentConfig::operator==(const ExperimentConfig& other) const {
    return serialize_config(*this) == serialize_config(other);
}

ExperimentConfig config_from_echo(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream text;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) break;  // header terminator in binary containers
        if (line.rfind("# ", 0) == 0) {
            text << line.substr(2) << "\n";  // CSV-style echo line
        } else if (line.rfind("config.", 0) == 0) {
            text << line.substr(7) << "\n";  // prefixed echo inside container headers
        } else if (line.find('=') != std::string::npos) {
            continue;  // container's own metadata key
        } else {
            break;  // start of CSV payload
        }
    }
    std::istringstream parsed(text.str());
    return parse_config_text(parsed, path + " (echo)");
}

} // namespace irsce
