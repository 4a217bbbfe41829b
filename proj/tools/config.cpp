#include "config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <sstream>

namespace modred::cli {

namespace {

const std::map<std::string, std::string>& defaults() {
    static const std::map<std::string, std::string> table = {
        {"tomo.n_side", "64"},
        {"tomo.n_angles", "60"},
        {"tomo.n_rays", "95"},
        {"tomo.source_radius", "2"},
        {"tomo.detector_radius", "2"},
        {"tomo.fov_radius", "0.75"},
        {"tomo.region", "32"},
        {"tomo.block", "16"},
        {"tomo.noise_rel", "0.02"},
        {"tomo.seed", "42"},
        {"tomo.pgm_lo", "0"},
        {"tomo.pgm_hi", "1"},

        {"prior.lambda", "10"},
        {"prior.alpha", "3"},
        {"prior.xi0", "0"},
        {"prior.gamma", "1"},
        {"prior.draws", "100"},
        {"prior.seed", "1000"},

        {"eit.refinement", "3"},
        {"eit.electrodes", "32"},
        {"eit.coverage", "0.5"},
        {"eit.z", "0.01"},
        {"eit.noise_rel", "0.001"},
        {"eit.seed", "7"},
        {"eit.shape_seed", "11"},
        {"eit.inclusion_x", "0.3"},
        {"eit.inclusion_y", "0.2"},
        {"eit.inclusion_width", "0.15"},
        {"eit.sigma0", "1"},
        {"eit.sigma1", "3"},
        {"eit.interior_radius", "0.9"},
        {"eit.prior_lambda", "5"},
        {"eit.prior_alpha", "3"},
        {"eit.prior_gamma", "5"},
        {"eit.draws", "5"},
        {"eit.sample_seed", "100"},
        {"eit.delta", "1"},
        {"eit.reg_lambda", "5"},
        {"eit.gn_iter", "3"},

        {"solver.method", "naive"},
        {"solver.tau", "1"},
        {"solver.max_iter", "2000"},
        {"solver.rank", "0"},

        {"io.out", "out"},
        {"io.experiment", "tomo"},
        {"io.sinogram", ""},
        {"io.phantom", ""},
        {"io.sample", ""},
        {"io.projector", ""},
        {"io.data", ""},
    };
    return table;
}

}  // namespace

Config::Config() : values_(defaults()) {}

void Config::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("unknown configuration key '" + key + "'");
    it->second = value;
}

void Config::apply_assignment(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw UsageError("expected section.key=value, got '" + assignment + "'");
    set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

void Config::load_ini(const std::filesystem::path& path) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(path.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw UsageError("cannot read config " + path.string() + ": " + e.message());
    }
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) throw UsageError("config " + path.string() + ": key '" + section + "' outside a section");
        for (const auto& [key, value] : body) set(section + "." + key, value.data());
    }
}

const std::string& Config::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::logic_error("Config::get: unregistered key " + key);
    return it->second;
}

double Config::get_double(const std::string& key) const {
    const std::string& s = get(key);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw UsageError("configuration key '" + key + "' expects a number, got '" + s + "'");
    return v;
}

long long Config::get_int(const std::string& key) const {
    const std::string& s = get(key);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw UsageError("configuration key '" + key + "' expects an integer, got '" + s + "'");
    return v;
}

std::string Config::to_ini() const {
    std::ostringstream out;
    std::string section;
    for (const auto& [key, value] : values_) {
        const auto dot = key.find('.');
        const std::string sec = key.substr(0, dot);
        if (sec != section) {
            if (!section.empty()) out << "\n";
            out << "[" << sec << "]\n";
            section = sec;
        }
        out << key.substr(dot + 1) << "=" << value << "\n";
    }
    return out.str();
}

}  // namespace modred::cli
