#include "forgetlab/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "forgetlab/csv.hpp"
#include "forgetlab/errors.hpp"

namespace forgetlab {

std::string_view to_string(Engine e) noexcept {
    switch (e) {
        case Engine::ode: return "ode";
        case Engine::sim: return "sim";
        case Engine::both: return "both";
    }
    return "ode";
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xF];
    return out;
}

namespace {

// ---- document parser ------------------------------------------------------

class LineParser {
public:
    LineParser(std::string_view text, int line) : text_(text), line_(line) {}

    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError("line " + std::to_string(line_), msg);
    }

    void skip_space() {
        while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
    }

    bool at_end() {
        skip_space();
        return pos_ >= text_.size() || text_[pos_] == '#';
    }

    char peek() {
        skip_space();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }

    void expect(char c) {
        if (peek() != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    std::string identifier(bool dotted) {
        skip_space();
        const std::size_t start = pos_;
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || (dotted && c == '.')) {
                ++pos_;
            } else {
                break;
            }
        }
        if (pos_ == start) fail("expected a key");
        return std::string(text_.substr(start, pos_ - start));
    }

    ConfigScalar scalar() {
        const char c = peek();
        if (c == '"') return string_literal();
        const std::size_t start = pos_;
        while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != ']' && text_[pos_] != '#'
               && text_[pos_] != ' ' && text_[pos_] != '\t') {
            ++pos_;
        }
        const std::string_view word = text_.substr(start, pos_ - start);
        if (word.empty()) fail("expected a value");
        if (word == "true") return true;
        if (word == "false") return false;
        double v = 0.0;
        const char* first = word.data();
        const char* last = word.data() + word.size();
        if (*first == '+') ++first;
        const auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || ptr != last) fail("cannot parse value '" + std::string(word) + "'");
        return v;
    }

    ConfigValue value() {
        if (peek() != '[') {
            return std::visit([](auto&& x) -> ConfigValue { return x; }, scalar());
        }
        ++pos_;
        std::vector<ConfigScalar> items;
        while (true) {
            if (peek() == ']') {
                ++pos_;
                break;
            }
            items.push_back(scalar());
            const char c = peek();
            if (c == ',') {
                ++pos_;
            } else if (c != ']') {
                fail("expected ',' or ']' in array");
            }
        }
        return items;
    }

private:
    std::string string_literal() {
        ++pos_;  // opening quote
        std::string out;
        while (pos_ < text_.size() && text_[pos_] != '"') {
            char c = text_[pos_++];
            if (c == '\\') {
                if (pos_ >= text_.size()) break;
                c = text_[pos_++];
                if (c == 'n') c = '\n';
                else if (c == 't') c = '\t';
                else if (c != '"' && c != '\\') fail("unknown escape sequence");
            }
            out.push_back(c);
        }
        if (pos_ >= text_.size()) fail("unterminated string");
        ++pos_;
        return out;
    }

    std::string_view text_;
    int line_;
    std::size_t pos_ = 0;
};

}  // namespace

ConfigDocument parse_config_document(std::string_view text) {
    ConfigDocument doc;
    std::string section;
    int line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t end = std::min(text.find('\n', start), text.size());
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        start = end + 1;
        ++line_no;

        LineParser p(line, line_no);
        if (p.at_end()) continue;
        if (p.peek() == '[') {
            p.expect('[');
            section = p.identifier(true);
            p.expect(']');
            if (!p.at_end()) p.fail("trailing characters after section header");
            continue;
        }
        const std::string key = p.identifier(false);
        p.expect('=');
        ConfigValue v = p.value();
        if (!p.at_end()) p.fail("trailing characters after value");
        const std::string full = section.empty() ? key : section + "." + key;
        if (!doc.emplace(full, std::move(v)).second) throw ConfigError(full, "key given twice");
        if (end == text.size()) break;
    }
    return doc;
}

namespace {

// ---- typed field table ----------------------------------------------------

[[noreturn]] void mismatch(const std::string& key, const char* want) {
    throw ConfigError(key, std::string("type mismatch, expected ") + want);
}

double as_number(const std::string& key, const ConfigScalar& v) {
    if (const auto* d = std::get_if<double>(&v)) return *d;
    mismatch(key, "a number");
}

double as_number(const std::string& key, const ConfigValue& v) {
    if (const auto* d = std::get_if<double>(&v)) return *d;
    mismatch(key, "a number");
}

std::int64_t as_integer(const std::string& key, double d) {
    if (!std::isfinite(d) || d != std::floor(d) || std::abs(d) > 9.0e15) mismatch(key, "an integer");
    return static_cast<std::int64_t>(d);
}

const std::string& as_string(const std::string& key, const ConfigValue& v) {
    if (const auto* s = std::get_if<std::string>(&v)) return *s;
    mismatch(key, "a string");
}

bool as_bool(const std::string& key, const ConfigValue& v) {
    if (const auto* b = std::get_if<bool>(&v)) return *b;
    mismatch(key, "true or false");
}

const std::vector<ConfigScalar>& as_array(const std::string& key, const ConfigValue& v) {
    if (const auto* a = std::get_if<std::vector<ConfigScalar>>(&v)) return *a;
    mismatch(key, "an array");
}

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

template <typename T>
std::string show_list(const std::vector<T>& xs) {
    std::string out = "[";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ", ";
        if constexpr (std::is_floating_point_v<T>) {
            out += format_double(xs[i]);
        } else {
            out += std::to_string(xs[i]);
        }
    }
    return out + "]";
}

struct Field {
    std::string key;
    bool grid = false;
    std::function<void(ExperimentConfig&, const ConfigValue&)> set;
    std::function<std::string(const ExperimentConfig&)> show;
};

template <typename Get>
Field real_field(std::string key, Get get) {
    return {key, false,
            [key, get](ExperimentConfig& c, const ConfigValue& v) { get(c) = as_number(key, v); },
            [get](const ExperimentConfig& c) { return format_double(get(c)); }};
}

template <typename Int, typename Get>
Field int_field(std::string key, Get get) {
    return {key, false,
            [key, get](ExperimentConfig& c, const ConfigValue& v) {
                get(c) = static_cast<Int>(as_integer(key, as_number(key, v)));
            },
            [get](const ExperimentConfig& c) { return std::to_string(get(c)); }};
}

template <typename Get>
Field bool_field(std::string key, Get get) {
    return {key, false, [key, get](ExperimentConfig& c, const ConfigValue& v) { get(c) = as_bool(key, v); },
            [get](const ExperimentConfig& c) {
                return std::string(get(c) ? "true" : "false");
            }};
}

template <typename Get>
Field path_field(std::string key, Get get) {
    return {key, false,
            [key, get](ExperimentConfig& c, const ConfigValue& v) { get(c) = as_string(key, v); },
            [get](const ExperimentConfig& c) { return quote(get(c).generic_string()); }};
}

template <typename Get>
Field real_list_field(std::string key, Get get) {
    return {key, true,
            [key, get](ExperimentConfig& c, const ConfigValue& v) {
                std::vector<double> out;
                for (const auto& x : as_array(key, v)) out.push_back(as_number(key, x));
                get(c) = std::move(out);
            },
            [get](const ExperimentConfig& c) { return show_list(get(c)); }};
}

template <typename Int, typename Get>
Field int_list_field(std::string key, Get get) {
    return {key, true,
            [key, get](ExperimentConfig& c, const ConfigValue& v) {
                std::vector<Int> out;
                for (const auto& x : as_array(key, v)) {
                    const std::int64_t i = as_integer(key, as_number(key, x));
                    if constexpr (std::is_unsigned_v<Int>) {
                        if (i < 0) throw ConfigError(key, "entries must be non-negative");
                    }
                    out.push_back(static_cast<Int>(i));
                }
                get(c) = std::move(out);
            },
            [get](const ExperimentConfig& c) { return show_list(get(c)); }};
}

template <typename Get>
Field class_pair_field(std::string key, Get get) {
    return {key, false,
            [key, get](ExperimentConfig& c, const ConfigValue& v) {
                const auto& a = as_array(key, v);
                if (a.size() != 2) throw ConfigError(key, "expected exactly two class labels");
                get(c) = {static_cast<int>(as_integer(key, as_number(key, a[0]))),
                          static_cast<int>(as_integer(key, as_number(key, a[1])))};
            },
            [get](const ExperimentConfig& c) {
                const auto& p = get(c);
                return "[" + std::to_string(p.first) + ", " + std::to_string(p.second) + "]";
            }};
}

template <typename Get>
Field activation_field(std::string key, Get get) {
    return {key, false,
            [key, get](ExperimentConfig& c, const ConfigValue& v) {
                try {
                    get(c) = parse_activation(as_string(key, v));
                } catch (const ArgumentError& e) {
                    throw ConfigError(key, e.what());
                }
            },
            [get](const ExperimentConfig& c) {
                return quote(std::string(to_string(get(c))));
            }};
}

const std::vector<Field>& field_table() {
    using C = ExperimentConfig;
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back({"engine", false,
                     [](C& c, const ConfigValue& v) {
                         const auto& s = as_string("engine", v);
                         if (s == "ode") c.engine = Engine::ode;
                         else if (s == "sim") c.engine = Engine::sim;
                         else if (s == "both") c.engine = Engine::both;
                         else throw ConfigError("engine", "expected \"ode\", \"sim\" or \"both\"");
                     },
                     [](const C& c) { return quote(std::string(to_string(c.engine))); }});
        f.push_back(int_field<int>("D", [](auto& c) -> auto& { return c.D; }));
        f.push_back(int_field<int>("K", [](auto& c) -> auto& { return c.K; }));
        f.push_back(int_field<int>("M", [](auto& c) -> auto& { return c.M; }));
        f.push_back(int_field<int>("P", [](auto& c) -> auto& { return c.P; }));
        f.push_back(int_field<int>("D_init", [](auto& c) -> auto& { return c.D_init; }));
        f.push_back(activation_field("activation", [](auto& c) -> auto& { return c.activation; }));
        f.push_back(real_field("weight_variance", [](auto& c) -> auto& { return c.weight_variance; }));
        f.push_back(real_field("head_variance", [](auto& c) -> auto& { return c.head_variance; }));
        f.push_back(real_field("lr_W", [](auto& c) -> auto& { return c.lr_W; }));
        f.push_back(real_field("lr_h", [](auto& c) -> auto& { return c.lr_h; }));
        f.push_back(real_field("tau_dagger", [](auto& c) -> auto& { return c.tau_dagger; }));
        f.push_back(real_field("tau_ddagger", [](auto& c) -> auto& { return c.tau_ddagger; }));
        f.push_back(real_field("dtau", [](auto& c) -> auto& { return c.dtau; }));
        f.push_back(real_field("record_every", [](auto& c) -> auto& { return c.record_every; }));
        f.push_back(int_field<std::int64_t>("probe_every", [](auto& c) -> auto& { return c.probe_every; }));
        f.push_back(int_field<std::int64_t>("n_test", [](auto& c) -> auto& { return c.n_test; }));
        f.push_back(bool_field("test_set_errors", [](auto& c) -> auto& { return c.test_set_errors; }));
        f.push_back({"scheme", false,
                     [](C& c, const ConfigValue& v) {
                         try {
                             c.scheme = parse_similarity_scheme(as_string("scheme", v));
                         } catch (const ArgumentError& e) {
                             throw ConfigError("scheme", e.what());
                         }
                     },
                     [](const C& c) { return quote(std::string(to_string(c.scheme))); }});
        f.push_back(real_list_field("similarity", [](auto& c) -> auto& { return c.similarity; }));
        f.push_back(int_list_field<std::uint64_t>("seeds", [](auto& c) -> auto& { return c.seeds; }));
        f.push_back({"seed_base", true,
                     [](C& c, const ConfigValue& v) {
                         const auto i = as_integer("seed_base", as_number("seed_base", v));
                         if (i < 0) throw ConfigError("seed_base", "must be non-negative");
                         c.seed_base = static_cast<std::uint64_t>(i);
                     },
                     [](const C& c) { return std::to_string(c.seed_base); }});
        f.push_back({"measure_tau", false,
                     [](C& c, const ConfigValue& v) { c.measure_tau = as_number("measure_tau", v); },
                     [](const C& c) { return c.measure_tau ? format_double(*c.measure_tau) : std::string("none"); }});

        f.push_back(real_list_field("ewc.lambdas", [](auto& c) -> auto& { return c.ewc_lambdas; }));
        f.push_back(int_field<std::int64_t>("ewc.fisher_samples", [](auto& c) -> auto& { return c.fisher_samples; }));
        f.push_back(int_list_field<std::int64_t>("replay.periods",
                                                 [](auto& c) -> auto& { return c.replay_periods; }));
        f.push_back(int_field<std::int64_t>("replay.slowing_period", [](auto& c) -> auto& { return c.slowing_period; }));

        f.push_back(path_field("mix.images", [](auto& c) -> auto& { return c.mix.images; }));
        f.push_back(path_field("mix.labels", [](auto& c) -> auto& { return c.mix.labels; }));
        f.push_back(class_pair_field("mix.first_classes", [](auto& c) -> auto& { return c.mix.first_classes; }));
        f.push_back(class_pair_field("mix.second_classes", [](auto& c) -> auto& { return c.mix.second_classes; }));
        f.push_back(int_field<int>("mix.hidden", [](auto& c) -> auto& { return c.mix.hidden; }));
        f.push_back(activation_field("mix.activation", [](auto& c) -> auto& { return c.mix.activation; }));
        f.push_back(real_field("mix.lr", [](auto& c) -> auto& { return c.mix.lr; }));
        f.push_back(int_field<int>("mix.input_dim", [](auto& c) -> auto& { return c.mix.input_dim; }));
        f.push_back(int_field<std::int64_t>("mix.steps_first", [](auto& c) -> auto& { return c.mix.steps_first; }));
        f.push_back(int_field<std::int64_t>("mix.steps_second", [](auto& c) -> auto& { return c.mix.steps_second; }));
        f.push_back(int_field<std::int64_t>("mix.probe_every", [](auto& c) -> auto& { return c.mix.probe_every; }));
        f.push_back(real_field("mix.test_fraction", [](auto& c) -> auto& { return c.mix.test_fraction; }));
        f.push_back(int_field<int>("mix.synthetic_per_class", [](auto& c) -> auto& { return c.mix.synthetic_per_class; }));
        f.push_back(real_list_field("mix.alphas", [](auto& c) -> auto& { return c.mix.alphas; }));

        f.push_back({"output_dir", false,
                     [](C& c, const ConfigValue& v) { c.output_dir = as_string("output_dir", v); }, nullptr});
        f.push_back({"workers", false,
                     [](C& c, const ConfigValue& v) {
                         c.workers = static_cast<int>(as_integer("workers", as_number("workers", v)));
                     },
                     nullptr});
        std::sort(f.begin(), f.end(), [](const Field& a, const Field& b) { return a.key < b.key; });
        return f;
    }();
    return table;
}

}  // namespace

std::int64_t ExperimentConfig::steps_dagger() const {
    return static_cast<std::int64_t>(std::llround(tau_dagger * D));
}

std::int64_t ExperimentConfig::steps_ddagger() const {
    return static_cast<std::int64_t>(std::llround(tau_ddagger * D));
}

std::string ExperimentConfig::canonical_text(bool include_grids) const {
    std::string out;
    for (const Field& f : field_table()) {
        if (!f.show || (f.grid && !include_grids)) continue;
        out += f.key;
        out += " = ";
        out += f.show(*this);
        out += '\n';
    }
    return out;
}

std::string ExperimentConfig::hash() const { return hex64(fnv1a64(canonical_text())); }

void ExperimentConfig::validate() const {
    auto require = [](bool ok, const char* key, const char* msg) {
        if (!ok) throw ConfigError(key, msg);
    };
    require(D >= 1, "D", "must be positive");
    require(K >= 1, "K", "must be positive");
    require(M >= 1, "M", "must be positive");
    require(P >= 1, "P", "must be positive");
    require(D_init >= 2, "D_init", "must be at least 2");
    require(weight_variance > 0.0, "weight_variance", "must be positive");
    require(head_variance >= 0.0, "head_variance", "must be non-negative");
    require(lr_W > 0.0 && std::isfinite(lr_W), "lr_W", "must be positive");
    require(lr_h >= 0.0 && std::isfinite(lr_h), "lr_h", "must be non-negative");
    require(tau_dagger > 0.0, "tau_dagger", "must be positive");
    require(tau_ddagger > 0.0, "tau_ddagger", "must be positive");
    require(dtau > 0.0, "dtau", "must be positive");
    require(record_every > 0.0, "record_every", "must be positive");
    require(probe_every >= 1, "probe_every", "must be at least 1");
    require(n_test >= 1, "n_test", "must be at least 1");
    require(!similarity.empty(), "similarity", "grid is empty");
    for (double v : similarity) {
        require(std::isfinite(v) && v >= -1.0 && v <= 1.0, "similarity", "values must lie in [-1, 1]");
    }
    if (scheme == SimilarityScheme::interpolation) {
        require(M == P, "scheme", "interpolation needs M == P");
        for (double v : similarity) require(v >= 0.0, "similarity", "interpolation needs values in [0, 1]");
    } else {
        require(M == 1 && P == 1, "scheme", "rotation needs single-unit teachers (M = P = 1)");
    }
    require(!seeds.empty(), "seeds", "grid is empty");
    require(!ewc_lambdas.empty(), "ewc.lambdas", "grid is empty");
    for (double l : ewc_lambdas) require(l >= 0.0 && std::isfinite(l), "ewc.lambdas", "values must be >= 0");
    require(fisher_samples >= 0, "ewc.fisher_samples", "must be non-negative");
    require(!replay_periods.empty(), "replay.periods", "grid is empty");
    for (auto t : replay_periods) require(t >= 1, "replay.periods", "periods must be >= 1");
    require(slowing_period >= 1, "replay.slowing_period", "must be >= 1");
    if (measure_tau) require(*measure_tau > tau_dagger, "measure_tau", "must lie after the switch");
    require(workers >= 1, "workers", "must be at least 1");

    require(mix.first_classes.first != mix.first_classes.second, "mix.first_classes", "classes must differ");
    require(mix.second_classes.first != mix.second_classes.second, "mix.second_classes", "classes must differ");
    require(mix.hidden >= 1, "mix.hidden", "must be positive");
    require(mix.lr > 0.0, "mix.lr", "must be positive");
    require(mix.input_dim >= 784, "mix.input_dim", "must hold a 28x28 image");
    require(mix.steps_first >= 1, "mix.steps_first", "must be positive");
    require(mix.steps_second >= 1, "mix.steps_second", "must be positive");
    require(mix.probe_every >= 1, "mix.probe_every", "must be at least 1");
    require(mix.test_fraction > 0.0 && mix.test_fraction < 1.0, "mix.test_fraction", "must lie in (0, 1)");
    require(mix.synthetic_per_class >= 10, "mix.synthetic_per_class", "must be at least 10");
    require(!mix.alphas.empty(), "mix.alphas", "grid is empty");
    for (double a : mix.alphas) require(a >= 0.0 && a <= 1.0, "mix.alphas", "values must lie in [0, 1]");
    require(mix.images.empty() == mix.labels.empty(), "mix.images", "give both mix.images and mix.labels or neither");
}

ExperimentConfig parse_config(std::string_view text) {
    const ConfigDocument doc = parse_config_document(text);
    ExperimentConfig cfg;
    const auto& table = field_table();
    for (const auto& [key, value] : doc) {
        const auto it = std::lower_bound(table.begin(), table.end(), key,
                                         [](const Field& f, const std::string& k) { return f.key < k; });
        if (it == table.end() || it->key != key) throw ConfigError(key, "unknown key");
        it->set(cfg, value);
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), "cannot open config file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace forgetlab
