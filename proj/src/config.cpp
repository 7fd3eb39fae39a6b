#include "flowcast/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "flowcast/error.hpp"

namespace flowcast {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

void parse_into(const std::string& text, const std::string& include_dir,
                std::map<std::string, std::string>& out, int depth) {
    if (depth > 8) throw ConfigError("config include depth exceeded (cycle?)");
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.rfind("include ", 0) == 0) {
            std::filesystem::path inc = trim(t.substr(8));
            if (inc.is_relative() && !include_dir.empty()) inc = std::filesystem::path(include_dir) / inc;
            std::ifstream f(inc);
            if (!f) throw ConfigError("config include not found: " + inc.string());
            std::stringstream buf;
            buf << f.rdbuf();
            parse_into(buf.str(), inc.parent_path().string(), out, depth + 1);
            continue;
        }
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + " is not key = value: " + t);
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + " has an empty key");
        out[key] = value;  // later assignment wins, so includes act as defaults
    }
}

// Typed view over the raw map that tracks which keys were consumed.
class ConfigReader {
  public:
    explicit ConfigReader(const std::map<std::string, std::string>& kv) : kv_(kv) {}

    std::string str(const std::string& key, const std::string& fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        consumed_.insert(key);
        return it->second;
    }

    long long integer(const std::string& key, long long fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        consumed_.insert(key);
        try {
            std::size_t pos = 0;
            long long v = std::stoll(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "' expects an integer, got '" + it->second + "'");
        }
    }

    double real(const std::string& key, double fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        consumed_.insert(key);
        try {
            std::size_t pos = 0;
            double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "' expects a number, got '" + it->second + "'");
        }
    }

    void reject_unknown() const {
        for (const auto& [key, value] : kv_) {
            (void)value;
            if (!consumed_.count(key)) throw ConfigError("unknown config key '" + key + "'");
        }
    }

  private:
    const std::map<std::string, std::string>& kv_;
    std::set<std::string> consumed_;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (c != ' ' && c != '\t') {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text,
                                                     const std::string& include_dir) {
    std::map<std::string, std::string> out;
    parse_into(text, include_dir, out, 0);
    return out;
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config file not found: " + path);
    std::stringstream buf;
    buf << f.rdbuf();
    return parse_config_text(buf.str(), std::filesystem::path(path).parent_path().string());
}

RunConfig RunConfig::from_map(const std::map<std::string, std::string>& kv) {
    ConfigReader r(kv);
    RunConfig c;

    c.data_path = r.str("data.path", "");
    c.schema.case_column = r.str("data.case_column", c.schema.case_column);
    c.schema.activity_column = r.str("data.activity_column", c.schema.activity_column);
    c.schema.timestamp_column = r.str("data.timestamp_column", c.schema.timestamp_column);
    c.schema.resource_column = r.str("data.resource_column", c.schema.resource_column);
    c.schema.timestamp_format = r.str("data.timestamp_format", c.schema.timestamp_format);
    const std::string delim = r.str("data.delimiter", std::string(1, c.schema.delimiter));
    if (delim.size() != 1) throw ConfigError("data.delimiter must be a single character");
    c.schema.delimiter = delim[0];
    for (const auto& name : split_list(r.str("data.extra_categorical", "")))
        c.extras.push_back({name, true});
    for (const auto& name : split_list(r.str("data.extra_numeric", "")))
        c.extras.push_back({name, false});
    for (const auto& e : c.extras) c.schema.extra_columns.push_back(e.name);

    c.bin_count = static_cast<int>(r.integer("preprocess.bins", c.bin_count));
    c.min_k = static_cast<std::size_t>(r.integer("preprocess.min_k", static_cast<long long>(c.min_k)));

    PredictorConfig& p = c.predictor;
    p.hidden_dim = static_cast<int>(r.integer("model.hidden_dim", p.hidden_dim));
    p.layers = static_cast<int>(r.integer("model.layers", p.layers));
    p.dropout = r.real("model.dropout", p.dropout);
    p.activity_emb_cap = static_cast<int>(r.integer("model.activity_emb_cap", p.activity_emb_cap));
    p.aux_emb_cap = static_cast<int>(r.integer("model.aux_emb_cap", p.aux_emb_cap));
    p.mlp_hidden = static_cast<int>(r.integer("model.mlp_hidden", p.mlp_hidden));
    p.forward_agg = aggregator_from_name(r.str("model.aggregator_forward", "lstm"));
    p.backward_agg = aggregator_from_name(r.str("model.aggregator_backward", "lstm"));
    p.repeat_agg = aggregator_from_name(r.str("model.aggregator_repeat", "mean"));
    const std::string uni = r.str("model.uniform_aggregator", "");
    if (!uni.empty()) p.uniform_agg = aggregator_from_name(uni);
    p.batch_size = static_cast<int>(r.integer("model.batch_size", p.batch_size));
    p.max_epochs = static_cast<int>(r.integer("model.epochs", p.max_epochs));
    p.early_stop_patience = static_cast<int>(r.integer("model.early_stop", p.early_stop_patience));
    p.learning_rate = r.real("model.learning_rate", p.learning_rate);

    AgentConfig& a = c.agent;
    a.reward.alpha = r.real("rl.alpha", a.reward.alpha);
    a.reward.beta = r.real("rl.beta", a.reward.beta);
    a.reward.gamma_eff = r.real("rl.gamma_eff", a.reward.gamma_eff);
    a.eps_start = r.real("rl.eps_start", a.eps_start);
    a.eps_end = r.real("rl.eps_end", a.eps_end);
    a.eps_decay_steps = r.integer("rl.eps_decay_steps", a.eps_decay_steps);
    a.buffer_capacity = static_cast<std::size_t>(
        r.integer("rl.buffer", static_cast<long long>(a.buffer_capacity)));
    a.warmup_transitions = static_cast<std::size_t>(
        r.integer("rl.warmup", static_cast<long long>(a.warmup_transitions)));
    a.batch_size = static_cast<int>(r.integer("rl.batch_size", a.batch_size));
    a.sync_interval = r.integer("rl.sync_interval", a.sync_interval);
    a.discount = r.real("rl.discount", a.discount);
    a.learning_rate = r.real("rl.learning_rate", a.learning_rate);
    a.passes = static_cast<int>(r.integer("rl.passes", a.passes));

    c.seed = static_cast<std::uint64_t>(r.integer("seed", static_cast<long long>(c.seed)));
    c.threads = static_cast<int>(r.integer("threads", c.threads));
    c.out_dir = r.str("out_dir", c.out_dir);
    c.precision = r.str("precision", c.precision);

    SyntheticSpec& s = c.synth;
    s.alphabet_size = static_cast<std::size_t>(
        r.integer("synth.alphabet", static_cast<long long>(s.alphabet_size)));
    s.num_traces = static_cast<std::size_t>(
        r.integer("synth.traces", static_cast<long long>(s.num_traces)));
    s.min_length = static_cast<std::size_t>(
        r.integer("synth.min_length", static_cast<long long>(s.min_length)));
    s.max_length = static_cast<std::size_t>(
        r.integer("synth.max_length", static_cast<long long>(s.max_length)));
    s.p_loop = r.real("synth.p_loop", s.p_loop);
    s.p_branch = r.real("synth.p_branch", s.p_branch);

    c.bench_repetitions = static_cast<int>(r.integer("bench.repetitions", c.bench_repetitions));

    r.reject_unknown();
    c.validate();
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    return from_map(parse_config_file(path));
}

void RunConfig::validate() const {
    if (bin_count < 2) throw ConfigError("preprocess.bins must be >= 2");
    if (min_k < 1) throw ConfigError("preprocess.min_k must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (precision != "float32" && precision != "float64")
        throw ConfigError("precision must be float32 or float64");
    if (bench_repetitions < 1) throw ConfigError("bench.repetitions must be >= 1");
    predictor.validate();
    agent.validate();
}

namespace {

std::string fmt_double(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

}  // namespace

std::string RunConfig::to_text() const {
    std::ostringstream os;
    os << "data.path = " << data_path << '\n';
    os << "data.case_column = " << schema.case_column << '\n';
    os << "data.activity_column = " << schema.activity_column << '\n';
    os << "data.timestamp_column = " << schema.timestamp_column << '\n';
    os << "data.resource_column = " << schema.resource_column << '\n';
    os << "data.timestamp_format = " << schema.timestamp_format << '\n';
    os << "data.delimiter = " << schema.delimiter << '\n';
    std::string cats, nums;
    for (const auto& e : extras) {
        std::string& dst = e.categorical ? cats : nums;
        if (!dst.empty()) dst += ",";
        dst += e.name;
    }
    os << "data.extra_categorical = " << cats << '\n';
    os << "data.extra_numeric = " << nums << '\n';
    os << "preprocess.bins = " << bin_count << '\n';
    os << "preprocess.min_k = " << min_k << '\n';
    os << "model.hidden_dim = " << predictor.hidden_dim << '\n';
    os << "model.layers = " << predictor.layers << '\n';
    os << "model.dropout = " << fmt_double(predictor.dropout) << '\n';
    os << "model.activity_emb_cap = " << predictor.activity_emb_cap << '\n';
    os << "model.aux_emb_cap = " << predictor.aux_emb_cap << '\n';
    os << "model.mlp_hidden = " << predictor.mlp_hidden << '\n';
    os << "model.aggregator_forward = " << aggregator_name(predictor.forward_agg) << '\n';
    os << "model.aggregator_backward = " << aggregator_name(predictor.backward_agg) << '\n';
    os << "model.aggregator_repeat = " << aggregator_name(predictor.repeat_agg) << '\n';
    os << "model.uniform_aggregator = "
       << (predictor.uniform_agg ? aggregator_name(*predictor.uniform_agg) : "") << '\n';
    os << "model.batch_size = " << predictor.batch_size << '\n';
    os << "model.epochs = " << predictor.max_epochs << '\n';
    os << "model.early_stop = " << predictor.early_stop_patience << '\n';
    os << "model.learning_rate = " << fmt_double(predictor.learning_rate) << '\n';
    os << "rl.alpha = " << fmt_double(agent.reward.alpha) << '\n';
    os << "rl.beta = " << fmt_double(agent.reward.beta) << '\n';
    os << "rl.gamma_eff = " << fmt_double(agent.reward.gamma_eff) << '\n';
    os << "rl.eps_start = " << fmt_double(agent.eps_start) << '\n';
    os << "rl.eps_end = " << fmt_double(agent.eps_end) << '\n';
    os << "rl.eps_decay_steps = " << agent.eps_decay_steps << '\n';
    os << "rl.buffer = " << agent.buffer_capacity << '\n';
    os << "rl.warmup = " << agent.warmup_transitions << '\n';
    os << "rl.batch_size = " << agent.batch_size << '\n';
    os << "rl.sync_interval = " << agent.sync_interval << '\n';
    os << "rl.discount = " << fmt_double(agent.discount) << '\n';
    os << "rl.learning_rate = " << fmt_double(agent.learning_rate) << '\n';
    os << "rl.passes = " << agent.passes << '\n';
    os << "seed = " << seed << '\n';
    os << "threads = " << threads << '\n';
    os << "out_dir = " << out_dir << '\n';
    os << "precision = " << precision << '\n';
    os << "synth.alphabet = " << synth.alphabet_size << '\n';
    os << "synth.traces = " << synth.num_traces << '\n';
    os << "synth.min_length = " << synth.min_length << '\n';
    os << "synth.max_length = " << synth.max_length << '\n';
    os << "synth.p_loop = " << fmt_double(synth.p_loop) << '\n';
    os << "synth.p_branch = " << fmt_double(synth.p_branch) << '\n';
    os << "bench.repetitions = " << bench_repetitions << '\n';
    return os.str();
}

}  // namespace flowcast
