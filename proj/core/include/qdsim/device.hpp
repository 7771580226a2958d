#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace qdsim {

class MaterialDatabase;

struct Layer {
    std::string material;
    double thickness_nm = 0.0;
    double donor_density = 0.0;     // cm^-3
    double acceptor_density = 0.0;  // cm^-3
    std::string label;

    double net_doping() const { return donor_density - acceptor_density; }
};

/// Layers ordered from the substrate (bottom contact) to the top contact.
struct LayerStack {
    std::string name;
    std::vector<Layer> layers;
    double temperature_K = 300.0;

    double total_thickness() const;
    /// Positions (nm) of the internal layer boundaries, bottom to top.
    std::vector<double> interface_positions() const;
    /// Bottom position (nm) of layer i.
    double layer_start(std::size_t i) const;

    /// Number of contiguous contact-doped layers at the bottom and top of
    /// the stack. A layer is contact-doped when |N_D - N_A| reaches
    /// kContactDopingThreshold.
    std::size_t bottom_contact_layers() const;
    std::size_t top_contact_layers() const;

    /// Undoped region between the two contacts, in nm.
    double intrinsic_start() const;
    double intrinsic_end() const;
    double intrinsic_thickness() const { return intrinsic_end() - intrinsic_start(); }

    /// Throws SchemaError (with the layer index) on invalid content and
    /// LookupError-derived SchemaError for unknown materials.
    void validate(const MaterialDatabase& db) const;
};

/// Doping above which a layer counts as a contact (cm^-3).
inline constexpr double kContactDopingThreshold = 1e17;

/// Parses the JSON device description (schema in data/device.schema.json).
/// Validates against the builtin material database unless `db` is given.
LayerStack parse_stack(std::string_view json_text);
LayerStack parse_stack(std::string_view json_text, const MaterialDatabase& db);
LayerStack load_stack(const std::string& path);

/// Inverse of parse_stack (stable key order, 17 significant digits).
std::string serialize_stack(const LayerStack& stack);

struct MeshOptions {
    double max_spacing_nm = 2.0;
    double fine_spacing_nm = 0.25;
    double refine_width_nm = 10.0;
};

struct Mesh1D {
    std::vector<double> nodes;            // nm, strictly increasing
    std::vector<std::size_t> interface_ids;  // node index of each internal layer boundary
    std::vector<std::size_t> node_layer;  // layer owning each node (substrate side at interfaces)
    std::vector<std::size_t> element_layer;  // layer containing element [i, i+1]

    std::size_t size() const { return nodes.size(); }
    std::size_t elements() const { return nodes.empty() ? 0 : nodes.size() - 1; }
    double spacing(std::size_t element) const { return nodes[element + 1] - nodes[element]; }
    /// Box (control-volume) width of node i in nm.
    double box_width(std::size_t i) const;
    /// Index of the node closest to x (ties resolve to the lower index).
    std::size_t nearest_node(double x_nm) const;
};

/// Builds a mesh whose nodes include every layer boundary, with spacing
/// <= max_spacing everywhere and <= fine_spacing within refine_width of an
/// internal interface. Throws DomainError on invalid options.
Mesh1D build_mesh(const LayerStack& stack, const MeshOptions& opts = {});

/// Bisects every element. All existing nodes are preserved.
Mesh1D refine_mesh(const Mesh1D& mesh);

/// Per-node and per-element material data used by the solvers.
///
/// Node values are piecewise constant by layer. At an interface node the
/// doping comes from the substrate-side layer and eps_r is the average of
/// the two adjacent layers. Element values always belong to the single layer
/// containing the element; box integration uses the element values, so
/// integrated charge equals the exact sum of layer sheet densities.
struct DopingProfile {
    std::vector<double> donors;     // cm^-3, per node
    std::vector<double> acceptors;  // cm^-3, per node
    std::vector<double> eps_r;      // per node
    std::vector<double> element_donors;
    std::vector<double> element_acceptors;
    std::vector<double> element_eps_r;

    /// Integral of N_D over the stack (cm^-2) by box integration over elements.
    double integrated_donors(const Mesh1D& mesh) const;
    double integrated_acceptors(const Mesh1D& mesh) const;
};

/// Throws ConsistencyError when the mesh was not built from `stack`.
DopingProfile doping_profile(const LayerStack& stack, const Mesh1D& mesh);

/// Sum over layers of thickness x donor density, in cm^-2.
double sheet_donor_density(const LayerStack& stack);

}  // namespace qdsim
