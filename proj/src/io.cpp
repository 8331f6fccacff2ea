#include "snell/io.hpp"

#include <fstream>
#include <iomanip>

#include <json.hpp>

namespace snell {

namespace {

std::ofstream open_csv(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << std::setprecision(17);
    return out;
}

}  // namespace

void write_lattice_csv(const Lattice& lattice, const std::string& path) {
    auto out = open_csv(path);
    out << "i,node,control,p_down,p_mid,p_up\n";
    for (Index i = 0; i < lattice.nt(); ++i)
        for (Index j = 0; j <= lattice.nx(); ++j)
            for (Index m = 0; m < lattice.n_controls(); ++m) {
                const KernelRow k = lattice.kernel(i, j, m);
                out << i << ',' << j << ',' << m << ',' << k.p_down << ',' << k.p_mid << ','
                    << k.p_up << '\n';
            }
}

void write_field_csv(const ValueField& field, const std::string& path) {
    auto out = open_csv(path);
    out << "t,x,u,h,active,argmax_control\n";
    for (Index i = 0; i <= field.nt(); ++i)
        for (Index j = 0; j <= field.nx(); ++j)
            out << field.t_grid(i) << ',' << field.x_grid(j) << ',' << field.u(i, j) << ','
                << field.h_field(i, j) << ',' << field.active(i, j) << ','
                << field.argmax_control(i, j) << '\n';
}

void write_solution_csv(const Lattice& lattice, const RBSDESolution& sol,
                        const std::string& path) {
    auto out = open_csv(path);
    out << "t,x,Y";
    for (Index c = 0; c < sol.z_dim; ++c) out << ",Z" << c;
    out << ",K\n";
    for (Index i = 0; i < sol.Y.rows(); ++i)
        for (Index j = 0; j < sol.Y.cols(); ++j) {
            out << lattice.t_grid(i) << ',' << lattice.x_grid(j) << ',' << sol.Y(i, j);
            for (Index c = 0; c < sol.z_dim; ++c) out << ',' << sol.Z(i, j * sol.z_dim + c);
            out << ',' << sol.K(i, j) << '\n';
        }
}

void write_paths_csv(const PathBundle& bundle, const std::string& path) {
    auto out = open_csv(path);
    out << "path_id,step,t";
    for (Index c = 0; c < bundle.state_dim; ++c) out << ",x" << c;
    out << '\n';
    for (Index p = 0; p < bundle.n_paths; ++p)
        for (Index i = 0; i <= bundle.n_steps; ++i) {
            out << p << ',' << i << ',' << bundle.times(i);
            for (Index c = 0; c < bundle.state_dim; ++c)
                out << ',' << bundle.states(p, i * bundle.state_dim + c);
            out << '\n';
        }
}

void write_dpp_csv(const DPPReport& report, const std::string& path) {
    auto out = open_csv(path);
    out << "t,x,lhs,rhs_frozen,rhs_policy\n";
    for (size_t q = 0; q < report.sample_points.size(); ++q) {
        const auto idx = static_cast<Index>(q);
        out << report.sample_points[q].first << ',' << report.sample_points[q].second << ','
            << report.lhs(idx) << ',' << report.rhs_frozen(idx) << ',' << report.rhs_policy(idx)
            << '\n';
    }
}

std::string dpp_report_json(const DPPReport& report) {
    nlohmann::json doc;
    doc["window_steps"] = report.window_steps;
    doc["nx"] = report.nx;
    doc["max_abs_gap_frozen"] = report.max_abs_gap_frozen;
    doc["max_abs_gap_policy"] = report.max_abs_gap_policy;
    doc["points"] = nlohmann::json::array();
    for (size_t q = 0; q < report.sample_points.size(); ++q) {
        const auto idx = static_cast<Index>(q);
        doc["points"].push_back({{"t", report.sample_points[q].first},
                                 {"x", report.sample_points[q].second},
                                 {"lhs", report.lhs(idx)},
                                 {"rhs_frozen", report.rhs_frozen(idx)},
                                 {"rhs_policy", report.rhs_policy(idx)}});
    }
    return doc.dump(2);
}

}  // namespace snell
