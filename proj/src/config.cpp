#include "splat4d/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <variant>
#include <vector>

#include "splat4d/errors.hpp"

namespace splat4d {

namespace {

using FieldRef = std::variant<double*, int*, bool*, size_t*, Vec3*, std::string*>;

struct Entry {
    const char* section;
    const char* key;
    FieldRef ref;
};

std::vector<Entry> make_registry(SessionConfig& c)
{
    MappingConfig& m = c.mapping;
    DbaOptions& t = c.tracking;
    SessionParams& s = c.session;
    return {
        {"mapping", "lr_center", &m.lr_center},
        {"mapping", "lr_rotation", &m.lr_rotation},
        {"mapping", "lr_log_scale", &m.lr_log_scale},
        {"mapping", "lr_opacity", &m.lr_opacity},
        {"mapping", "lr_color", &m.lr_color},
        {"mapping", "lr_node_pose", &m.lr_node_pose},
        {"mapping", "lr_opacity_weight", &m.lr_opacity_weight},
        {"mapping", "lr_exposure", &m.lr_exposure},
        {"mapping", "lr_pose", &m.lr_pose},
        {"mapping", "lr_uncertainty", &m.lr_uncertainty},
        {"mapping", "lambda_dssim", &m.lambda_dssim},
        {"mapping", "lambda_depth", &m.lambda_depth},
        {"mapping", "uncertainty_reg", &m.uncertainty_reg},
        {"mapping", "lambda_speed", &m.lambda_speed},
        {"mapping", "lambda_accel", &m.lambda_accel},
        {"mapping", "lambda_rigid", &m.lambda_rigid},
        {"mapping", "lambda_weight_similarity", &m.lambda_weight_similarity},
        {"mapping", "delta_u", &m.delta_u},
        {"mapping", "delta_ru", &m.delta_ru},
        {"mapping", "mask_prompts", &m.mask_prompts},
        {"mapping", "enable_ir", &m.enable_ir},
        {"mapping", "enable_aow", &m.enable_aow},
        {"mapping", "enable_rum", &m.enable_rum},
        {"mapping", "refine_poses", &m.refine_poses},
        {"mapping", "refine_pose_end", &m.refine_pose_end},
        {"mapping", "train_uncertainty", &m.train_uncertainty},
        {"mapping", "binding_neighbors", &m.binding_neighbors},
        {"mapping", "regularizer_neighbors", &m.regularizer_neighbors},
        {"mapping", "opacity_weight_init", &m.opacity_weight_init},
        {"mapping", "opacity_weight_frozen", &m.opacity_weight_frozen},
        {"mapping", "densify_interval", &m.densify_interval},
        {"mapping", "densify_grad_threshold", &m.densify_grad_threshold},
        {"mapping", "densify_split_scale", &m.densify_split_scale},
        {"mapping", "prune_opacity", &m.prune_opacity},
        {"mapping", "max_gaussians", &m.max_gaussians},
        {"mapping", "background", &m.background},
        {"exposure", "rotation_step", &m.exposure.rotation_step},
        {"exposure", "translation_step", &m.exposure.translation_step},
        {"exposure", "max_samples", &m.exposure.max_samples},
        {"tracking", "max_iterations", &t.max_iterations},
        {"tracking", "pose_tolerance", &t.pose_tolerance},
        {"tracking", "damping", &t.damping},
        {"tracking", "depth_prior_weight", &t.depth_prior_weight},
        {"tracking", "min_inv_depth", &t.min_inv_depth},
        {"session", "dataset", &s.dataset},
        {"session", "keyframe_stride", &s.keyframe_stride},
        {"session", "seed_stride", &s.seed_stride},
        {"session", "seed_opacity", &s.seed_opacity},
        {"session", "static_iterations", &s.static_iterations},
        {"session", "dynamic_iterations", &s.dynamic_iterations},
        {"session", "mask_updates", &s.mask_updates},
        {"session", "scaffold_nodes", &s.scaffold_nodes},
        {"session", "radius_neighbor", &s.radius_neighbor},
        {"session", "radius_scale", &s.radius_scale},
        {"session", "tracking_stride", &s.tracking_stride},
        {"session", "shutter_init", &s.shutter_init},
    };
}

std::string trim(const std::string& s)
{
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

double parse_double(const std::string& v, const std::string& where)
{
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size() || v.empty())
        throw ConfigError("bad number for " + where + ": '" + v + "'");
    return d;
}

void assign(const FieldRef& ref, const std::string& v, const std::string& where)
{
    std::visit(
        [&](auto* p) {
            using T = std::remove_pointer_t<decltype(p)>;
            if constexpr (std::is_same_v<T, double>) {
                *p = parse_double(v, where);
            } else if constexpr (std::is_same_v<T, int>) {
                const double d = parse_double(v, where);
                if (d != static_cast<int>(d))
                    throw ConfigError("expected integer for " + where + ": '" + v + "'");
                *p = static_cast<int>(d);
            } else if constexpr (std::is_same_v<T, size_t>) {
                const double d = parse_double(v, where);
                if (d < 0 || d != static_cast<size_t>(d))
                    throw ConfigError("expected count for " + where + ": '" + v + "'");
                *p = static_cast<size_t>(d);
            } else if constexpr (std::is_same_v<T, bool>) {
                if (v == "true" || v == "1")
                    *p = true;
                else if (v == "false" || v == "0")
                    *p = false;
                else
                    throw ConfigError("expected bool for " + where + ": '" + v + "'");
            } else if constexpr (std::is_same_v<T, std::string>) {
                *p = v;  // already trimmed; '#' would start a comment
            } else {  // Vec3
                std::istringstream in(v);
                Vec3 out;
                if (!(in >> out[0] >> out[1] >> out[2]) || !(in >> std::ws).eof())
                    throw ConfigError("expected three numbers for " + where + ": '" + v + "'");
                *p = out;
            }
        },
        ref);
}

std::string format(const FieldRef& ref)
{
    std::ostringstream out;
    out << std::setprecision(17);
    std::visit(
        [&](auto* p) {
            using T = std::remove_pointer_t<decltype(p)>;
            if constexpr (std::is_same_v<T, bool>)
                out << (*p ? "true" : "false");
            else if constexpr (std::is_same_v<T, Vec3>)
                out << (*p)[0] << ' ' << (*p)[1] << ' ' << (*p)[2];
            else
                out << *p;
        },
        ref);
    return out.str();
}

}  // namespace

SessionConfig parse_config(const std::string& text)
{
    SessionConfig config;
    const auto registry = make_registry(config);

    std::istringstream in(text);
    std::string raw, section;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const size_t hash = raw.find_first_of("#;");
        std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(line_no) +
                                  ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            bool known = false;
            for (const Entry& e : registry) known |= section == e.section;
            if (!known)
                throw ConfigError("line " + std::to_string(line_no) +
                                  ": unknown section [" + section + "]");
            continue;
        }

        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) +
                              ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty())
            throw ConfigError("line " + std::to_string(line_no) +
                              ": key '" + key + "' before any [section]");

        const Entry* hit = nullptr;
        for (const Entry& e : registry)
            if (section == e.section && key == e.key) hit = &e;
        if (!hit)
            throw ConfigError("line " + std::to_string(line_no) +
                              ": unknown key " + section + "." + key);
        assign(hit->ref, value, section + "." + key);
    }
    return config;
}

SessionConfig load_config(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string config_to_text(const SessionConfig& config)
{
    SessionConfig copy = config;
    const auto registry = make_registry(copy);
    std::ostringstream out;
    std::string section;
    for (const Entry& e : registry) {
        if (section != e.section) {
            if (!section.empty()) out << '\n';
            section = e.section;
            out << '[' << section << "]\n";
        }
        out << e.key << " = " << format(e.ref) << '\n';
    }
    return out.str();
}

}  // namespace splat4d
