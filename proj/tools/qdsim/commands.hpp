#pragma once

#include <optional>
#include <string>
#include <vector>

#include "report.hpp"

namespace qdsim::cli {

struct BandedgesOptions {
    std::vector<double> biases;
};
int cmd_bandedges(const GlobalOptions& g, const BandedgesOptions& o);

struct IvOptions {
    double v_min = -1.0;
    double v_max = 2.0;
    double step = 0.1;
    double generation = 0.0;
    double area_mm2 = 0.14;
};
int cmd_iv(const GlobalOptions& g, const IvOptions& o);

struct StarkOptions {
    std::string lines;
    double v_min = 0.59;
    double v_max = 1.96;
    int points = 138;
    std::optional<double> intrinsic_nm;
};
int cmd_stark(const GlobalOptions& g, const StarkOptions& o);

struct SynthmapOptions {
    std::string lines;
    std::string ladder;
    double v_min = 0.75;
    double v_max = 1.45;
    int v_points = 141;
    double l_min = 1526.0;
    double l_max = 1536.0;
    int l_points = 1001;
    double linewidth_ueV = 50.0;
    double line_counts = 1e4;
    double bg_high = 200.0;
    double bg_low = 5.0;
    double bg_mid = 1.0;
    double bg_width = 0.08;
    bool no_noise = false;
};
int cmd_synthmap(const GlobalOptions& g, const SynthmapOptions& o);

struct FitOptions {
    std::string input;
    int n_peaks = 1;
    std::string shape = "lorentzian";
    double snr_gate = 5.0;
    std::optional<double> target_nm;
    std::optional<double> cutoff_uW;
    std::string tag;  // output file stem, defaults to the fit kind
};
int cmd_fit_peaks(const GlobalOptions& g, const FitOptions& o);
int cmd_fit_fss(const GlobalOptions& g, const FitOptions& o);
int cmd_fit_power(const GlobalOptions& g, const FitOptions& o);
int cmd_fit_g2(const GlobalOptions& g, const FitOptions& o);
int cmd_fit_lifetime(const GlobalOptions& g, const FitOptions& o);

/// Writes the seeded synthetic data sets that ship in data/synthetic.
int cmd_synthdata(const GlobalOptions& g);

}  // namespace qdsim::cli
