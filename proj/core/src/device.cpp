#include "qdsim/device.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qdsim/constants.hpp"
#include "qdsim/errors.hpp"
#include "qdsim/materials.hpp"

namespace qdsim {

using nlohmann::json;

double LayerStack::total_thickness() const {
    double t = 0.0;
    for (const auto& l : layers) t += l.thickness_nm;
    return t;
}

double LayerStack::layer_start(std::size_t i) const {
    double x = 0.0;
    for (std::size_t k = 0; k < i; ++k) x += layers[k].thickness_nm;
    return x;
}

std::vector<double> LayerStack::interface_positions() const {
    std::vector<double> out;
    double x = 0.0;
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
        x += layers[i].thickness_nm;
        out.push_back(x);
    }
    return out;
}

namespace {

bool is_contact_doped(const Layer& l) {
    return std::abs(l.net_doping()) >= kContactDopingThreshold;
}

}  // namespace

std::size_t LayerStack::bottom_contact_layers() const {
    std::size_t n = 0;
    while (n < layers.size() && is_contact_doped(layers[n])) ++n;
    return n;
}

std::size_t LayerStack::top_contact_layers() const {
    std::size_t n = 0;
    while (n < layers.size() && is_contact_doped(layers[layers.size() - 1 - n])) ++n;
    return n;
}

double LayerStack::intrinsic_start() const {
    return layer_start(std::min(bottom_contact_layers(), layers.size()));
}

double LayerStack::intrinsic_end() const {
    const std::size_t top = top_contact_layers();
    if (top >= layers.size()) return intrinsic_start();
    return std::max(layer_start(layers.size() - top), intrinsic_start());
}

void LayerStack::validate(const MaterialDatabase& db) const {
    if (layers.empty()) throw SchemaError("layer list is empty", "layers");
    if (!(temperature_K > 0.0 && temperature_K <= 400.0)) {
        throw SchemaError("temperature must lie in (0, 400] K", "temperature_K");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        const std::string where = "layers[" + std::to_string(i) + "]";
        if (!(l.thickness_nm > 0.0)) throw SchemaError("thickness must be positive", where);
        if (!(l.donor_density >= 0.0) || !(l.acceptor_density >= 0.0)) {
            throw SchemaError("doping densities must be non-negative", where);
        }
        if (!db.contains(l.material)) {
            throw SchemaError("unknown material '" + l.material + "'", where);
        }
    }
}

namespace {

double require_number(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw SchemaError(std::string("missing field '") + key + "'", where);
    if (!it->is_number()) throw SchemaError(std::string("field '") + key + "' must be a number", where);
    return it->get<double>();
}

double optional_number(const json& obj, const char* key, double fallback, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    if (!it->is_number()) throw SchemaError(std::string("field '") + key + "' must be a number", where);
    return it->get<double>();
}

}  // namespace

LayerStack parse_stack(std::string_view text) {
    return parse_stack(text, MaterialDatabase::builtin());
}

LayerStack parse_stack(std::string_view text, const MaterialDatabase& db) {
    json doc;
    try {
        doc = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("invalid JSON: ") + e.what(), "document");
    }
    if (!doc.is_object()) throw SchemaError("device document must be a JSON object", "document");

    LayerStack stack;
    if (auto it = doc.find("name"); it != doc.end()) {
        if (!it->is_string()) throw SchemaError("'name' must be a string", "name");
        stack.name = it->get<std::string>();
    }
    stack.temperature_K = require_number(doc, "temperature_K", "document");

    auto layers = doc.find("layers");
    if (layers == doc.end()) throw SchemaError("missing field 'layers'", "document");
    if (!layers->is_array()) throw SchemaError("'layers' must be an array", "layers");

    static const char* kLayerKeys[] = {"label", "material", "thickness_nm", "donor_density_cm3",
                                       "acceptor_density_cm3"};
    for (std::size_t i = 0; i < layers->size(); ++i) {
        const json& item = (*layers)[i];
        const std::string where = "layers[" + std::to_string(i) + "]";
        if (!item.is_object()) throw SchemaError("layer must be an object", where);
        for (const auto& [key, value] : item.items()) {
            if (std::find_if(std::begin(kLayerKeys), std::end(kLayerKeys),
                             [&](const char* k) { return key == k; }) == std::end(kLayerKeys)) {
                throw SchemaError("unknown field '" + key + "'", where);
            }
        }
        Layer l;
        auto mat = item.find("material");
        if (mat == item.end()) throw SchemaError("missing field 'material'", where);
        if (!mat->is_string()) throw SchemaError("'material' must be a string", where);
        l.material = mat->get<std::string>();
        l.thickness_nm = require_number(item, "thickness_nm", where);
        l.donor_density = optional_number(item, "donor_density_cm3", 0.0, where);
        l.acceptor_density = optional_number(item, "acceptor_density_cm3", 0.0, where);
        if (auto lab = item.find("label"); lab != item.end()) {
            if (!lab->is_string()) throw SchemaError("'label' must be a string", where);
            l.label = lab->get<std::string>();
        }
        stack.layers.push_back(std::move(l));
    }
    stack.validate(db);
    return stack;
}

LayerStack load_stack(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw SchemaError("cannot open device file", path);
    std::ostringstream ss;
    ss << f.rdbuf();
    try {
        return parse_stack(ss.str());
    } catch (const SchemaError& e) {
        throw SchemaError(e.what(), path);
    }
}

std::string serialize_stack(const LayerStack& stack) {
    json doc = json::object();
    doc["name"] = stack.name;
    doc["temperature_K"] = stack.temperature_K;
    json layers = json::array();
    for (const auto& l : stack.layers) {
        json item = json::object();
        item["label"] = l.label;
        item["material"] = l.material;
        item["thickness_nm"] = l.thickness_nm;
        item["donor_density_cm3"] = l.donor_density;
        item["acceptor_density_cm3"] = l.acceptor_density;
        layers.push_back(std::move(item));
    }
    doc["layers"] = std::move(layers);
    return doc.dump(2) + "\n";
}

double Mesh1D::box_width(std::size_t i) const {
    double w = 0.0;
    if (i > 0) w += 0.5 * (nodes[i] - nodes[i - 1]);
    if (i + 1 < nodes.size()) w += 0.5 * (nodes[i + 1] - nodes[i]);
    return w;
}

std::size_t Mesh1D::nearest_node(double x) const {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), x);
    if (it == nodes.end()) return nodes.size() - 1;
    const std::size_t hi = static_cast<std::size_t>(it - nodes.begin());
    if (hi == 0) return 0;
    return (x - nodes[hi - 1] <= nodes[hi] - x) ? hi - 1 : hi;
}

namespace {

// Appends the interior points plus the end point of [a, b] split into
// uniform elements no longer than `spacing`.
void subdivide(std::vector<double>& nodes, std::vector<std::size_t>& element_layer, double a, double b,
               double spacing, std::size_t layer) {
    const double len = b - a;
    if (len <= 0.0) return;
    const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / spacing - 1e-9)));
    for (std::size_t k = 1; k <= n; ++k) {
        nodes.push_back(k == n ? b : a + len * static_cast<double>(k) / static_cast<double>(n));
        element_layer.push_back(layer);
    }
}

}  // namespace

Mesh1D build_mesh(const LayerStack& stack, const MeshOptions& opts) {
    if (!(opts.max_spacing_nm > 0.0) || !(opts.fine_spacing_nm > 0.0)) {
        throw DomainError("mesh spacings must be positive");
    }
    if (!(opts.fine_spacing_nm <= opts.max_spacing_nm)) {
        throw DomainError("fine_spacing must not exceed max_spacing");
    }
    if (!(opts.refine_width_nm >= 0.0)) throw DomainError("refine_width must be non-negative");
    if (stack.layers.empty()) throw DomainError("cannot mesh an empty layer stack");

    Mesh1D mesh;
    mesh.nodes.push_back(0.0);
    const std::size_t n_layers = stack.layers.size();
    const double w = opts.refine_width_nm;
    double a = 0.0;
    for (std::size_t li = 0; li < n_layers; ++li) {
        const double b = (li + 1 == n_layers) ? stack.total_thickness() : a + stack.layers[li].thickness_nm;
        const bool fine_bottom = li > 0 && w > 0.0;
        const bool fine_top = li + 1 < n_layers && w > 0.0;
        const double lo = fine_bottom ? std::min(a + w, b) : a;
        const double hi = fine_top ? std::max(b - w, a) : b;
        if (lo >= hi) {
            subdivide(mesh.nodes, mesh.element_layer, a, b, opts.fine_spacing_nm, li);
        } else {
            subdivide(mesh.nodes, mesh.element_layer, a, lo, opts.fine_spacing_nm, li);
            subdivide(mesh.nodes, mesh.element_layer, lo, hi, opts.max_spacing_nm, li);
            subdivide(mesh.nodes, mesh.element_layer, hi, b, opts.fine_spacing_nm, li);
        }
        if (li + 1 < n_layers) mesh.interface_ids.push_back(mesh.nodes.size() - 1);
        a = b;
    }

    mesh.node_layer.resize(mesh.nodes.size());
    mesh.node_layer[0] = 0;
    for (std::size_t i = 1; i < mesh.nodes.size(); ++i) mesh.node_layer[i] = mesh.element_layer[i - 1];
    return mesh;
}

Mesh1D refine_mesh(const Mesh1D& mesh) {
    Mesh1D out;
    if (mesh.nodes.empty()) return out;
    out.nodes.reserve(2 * mesh.nodes.size());
    out.nodes.push_back(mesh.nodes[0]);
    out.node_layer.push_back(mesh.node_layer[0]);
    std::size_t next_iface = 0;
    for (std::size_t e = 0; e < mesh.elements(); ++e) {
        const std::size_t layer = mesh.element_layer[e];
        out.nodes.push_back(0.5 * (mesh.nodes[e] + mesh.nodes[e + 1]));
        out.node_layer.push_back(layer);
        out.element_layer.push_back(layer);
        out.nodes.push_back(mesh.nodes[e + 1]);
        out.node_layer.push_back(mesh.node_layer[e + 1]);
        out.element_layer.push_back(layer);
        if (next_iface < mesh.interface_ids.size() && mesh.interface_ids[next_iface] == e + 1) {
            out.interface_ids.push_back(out.nodes.size() - 1);
            ++next_iface;
        }
    }
    return out;
}

double DopingProfile::integrated_donors(const Mesh1D& mesh) const {
    double s = 0.0;
    for (std::size_t e = 0; e < mesh.elements(); ++e) s += element_donors[e] * mesh.spacing(e);
    return s * constants::nm_to_cm;
}

double DopingProfile::integrated_acceptors(const Mesh1D& mesh) const {
    double s = 0.0;
    for (std::size_t e = 0; e < mesh.elements(); ++e) s += element_acceptors[e] * mesh.spacing(e);
    return s * constants::nm_to_cm;
}

DopingProfile doping_profile(const LayerStack& stack, const Mesh1D& mesh) {
    const std::size_t n_layers = stack.layers.size();
    if (mesh.nodes.size() < 2 || mesh.node_layer.size() != mesh.nodes.size() ||
        mesh.element_layer.size() != mesh.elements() || mesh.interface_ids.size() + 1 != n_layers) {
        throw ConsistencyError("mesh does not match layer stack");
    }
    const auto ifaces = stack.interface_positions();
    const double tol = 1e-9 * std::max(1.0, stack.total_thickness());
    for (std::size_t k = 0; k < ifaces.size(); ++k) {
        if (std::abs(mesh.nodes[mesh.interface_ids[k]] - ifaces[k]) > tol) {
            throw ConsistencyError("mesh interface " + std::to_string(k) + " is not at the layer boundary");
        }
    }
    if (std::abs(mesh.nodes.back() - stack.total_thickness()) > tol || mesh.nodes.front() != 0.0) {
        throw ConsistencyError("mesh does not span the layer stack");
    }
    for (std::size_t layer : mesh.element_layer) {
        if (layer >= n_layers) throw ConsistencyError("mesh references a layer outside the stack");
    }

    const auto& db = MaterialDatabase::builtin();
    std::vector<double> layer_eps(n_layers);
    for (std::size_t i = 0; i < n_layers; ++i) {
        layer_eps[i] = db.lookup(stack.layers[i].material, stack.temperature_K).eps_r;
    }

    DopingProfile p;
    const std::size_t n = mesh.size();
    p.donors.resize(n);
    p.acceptors.resize(n);
    p.eps_r.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& l = stack.layers[mesh.node_layer[i]];
        p.donors[i] = l.donor_density;
        p.acceptors[i] = l.acceptor_density;
        p.eps_r[i] = layer_eps[mesh.node_layer[i]];
    }
    for (std::size_t k = 0; k < mesh.interface_ids.size(); ++k) {
        const std::size_t i = mesh.interface_ids[k];
        p.eps_r[i] = 0.5 * (layer_eps[mesh.element_layer[i - 1]] + layer_eps[mesh.element_layer[i]]);
    }
    for (std::size_t e = 0; e < mesh.elements(); ++e) {
        const auto& l = stack.layers[mesh.element_layer[e]];
        p.element_donors.push_back(l.donor_density);
        p.element_acceptors.push_back(l.acceptor_density);
        p.element_eps_r.push_back(layer_eps[mesh.element_layer[e]]);
    }
    return p;
}

double sheet_donor_density(const LayerStack& stack) {
    double s = 0.0;
    for (const auto& l : stack.layers) s += l.thickness_nm * constants::nm_to_cm * l.donor_density;
    return s;
}

}  // namespace qdsim
