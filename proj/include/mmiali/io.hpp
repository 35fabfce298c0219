// Copyright 2026 The mmiali Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmiali/metrics.hpp"
#include "mmiali/synthetic.hpp"
#include "mmiali/trainer.hpp"

namespace mmiali {

/// Writes via a temporary sibling and rename, so readers never see a partial file.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw Error("short write to '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// 17 significant digits: round-trips every double.
inline std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {
inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw Error(where + ": not a number '" + s + "'");
    }
    if (used != s.size()) throw Error(where + ": not a number '" + s + "'");
    return v;
}
}  // namespace detail

// ---- datasets --------------------------------------------------------------

inline constexpr const char* kDatasetHeader = "domain,split,idx,x0,x1";

/// One domain's train and test rows.
inline std::string dataset_csv(const Dataset& ds, std::size_t domain) {
    std::ostringstream os;
    os << kDatasetHeader << '\n';
    for (int split = 0; split < 2; ++split) {
        const Tensor& t = split == 0 ? ds.train.at(domain) : ds.test.at(domain);
        for (std::size_t r = 0; r < t.rows(); ++r)
            os << domain << ',' << (split == 0 ? "train" : "test") << ',' << r << ',' << fmt17(t.at(r, 0)) << ','
               << fmt17(t.at(r, 1)) << '\n';
    }
    return os.str();
}

struct DomainRows {
    std::size_t domain = 0;
    Tensor train;
    Tensor test;
};

inline DomainRows parse_dataset_csv(const std::string& text, const std::string& source = "dataset") {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != kDatasetHeader)
        throw Error(source + ": expected header '" + std::string(kDatasetHeader) + "'");
    DomainRows out;
    std::vector<double> train, test;
    bool first = true;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = detail::split_csv(line);
        const std::string where = source + ":" + std::to_string(line_no);
        if (cells.size() != 5) throw Error(where + ": expected 5 columns");
        const auto domain = static_cast<std::size_t>(detail::parse_double(cells[0], where));
        if (first) out.domain = domain;
        else if (domain != out.domain) throw Error(where + ": mixed domains in one file");
        first = false;
        auto& dst = cells[1] == "train" ? train : cells[1] == "test" ? test : throw Error(where + ": bad split");
        if (static_cast<std::size_t>(detail::parse_double(cells[2], where)) != dst.size() / 2)
            throw Error(where + ": rows out of order");
        dst.push_back(detail::parse_double(cells[3], where));
        dst.push_back(detail::parse_double(cells[4], where));
    }
    const std::size_t n_train = train.size() / 2, n_test = test.size() / 2;
    out.train = Tensor(Shape{n_train, 2}, std::move(train));
    out.test = Tensor(Shape{n_test, 2}, std::move(test));
    return out;
}

inline nlohmann::json manifest_json(const std::vector<DomainSpec>& specs, bool paired, std::uint64_t seed) {
    nlohmann::json j;
    j["format"] = "mmiali-dataset";
    j["version"] = 1;
    j["domains"] = specs.size();
    j["paired"] = paired;
    j["seed"] = seed;
    j["specs"] = nlohmann::json::array();
    for (const auto& s : specs) {
        nlohmann::json d;
        d["index"] = s.index;
        d["variance"] = s.variance;
        d["angle"] = s.from_base.angle;
        d["translation"] = {s.from_base.translation[0], s.from_base.translation[1]};
        d["means"] = nlohmann::json::array();
        for (const auto& p : s.means) d["means"].push_back({p[0], p[1]});
        d["file"] = "domain_" + std::to_string(s.index) + ".csv";
        j["specs"].push_back(d);
    }
    return j;
}

inline std::vector<DomainSpec> specs_from_manifest(const nlohmann::json& j) {
    try {
        if (j.at("format") != "mmiali-dataset" || j.at("version") != 1)
            throw Error("manifest: unsupported format or version");
        std::vector<DomainSpec> specs;
        for (const auto& d : j.at("specs")) {
            DomainSpec s;
            s.index = d.at("index").get<std::size_t>();
            s.variance = d.at("variance").get<double>();
            s.from_base.angle = d.at("angle").get<double>();
            s.from_base.translation = {d.at("translation")[0].get<double>(), d.at("translation")[1].get<double>()};
            for (const auto& p : d.at("means")) s.means.push_back({p[0].get<double>(), p[1].get<double>()});
            specs.push_back(std::move(s));
        }
        return specs;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("manifest: ") + e.what());
    }
}

/// Writes manifest.json plus domain_<j>.csv for every domain.
inline void write_dataset_dir(const std::filesystem::path& dir, const std::vector<DomainSpec>& specs,
                              const Dataset& ds, std::uint64_t seed) {
    for (std::size_t j = 0; j < specs.size(); ++j)
        atomic_write(dir / ("domain_" + std::to_string(j) + ".csv"), dataset_csv(ds, j));
    atomic_write(dir / "manifest.json", manifest_json(specs, ds.paired, seed).dump(2) + "\n");
}

struct LoadedData {
    std::vector<DomainSpec> specs;
    Dataset dataset;
};

inline LoadedData read_dataset_dir(const std::filesystem::path& dir) {
    LoadedData out;
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("manifest: ") + e.what());
    }
    out.specs = specs_from_manifest(manifest);
    out.dataset.paired = manifest.at("paired").get<bool>();
    for (std::size_t j = 0; j < out.specs.size(); ++j) {
        const std::string name = "domain_" + std::to_string(j) + ".csv";
        DomainRows rows = parse_dataset_csv(read_file(dir / name), name);
        if (rows.domain != j) throw Error(name + ": holds domain " + std::to_string(rows.domain));
        out.dataset.train.push_back(std::move(rows.train));
        out.dataset.test.push_back(std::move(rows.test));
    }
    return out;
}

// ---- loss history ----------------------------------------------------------

inline std::vector<std::string> history_columns(const LossReport& r) {
    std::vector<std::string> cols{"step", "generator", "critic", "adversarial", "regularizer"};
    for (std::size_t i = 0; i < r.ali.size(); ++i) cols.push_back("ali_" + std::to_string(i));
    for (std::size_t i = 0; i < r.dmae.size(); ++i) cols.push_back("dmae_" + std::to_string(i));
    for (const auto& p : r.pairs) {
        const std::string tag = std::to_string(p.i) + "_" + std::to_string(p.j);
        cols.push_back("first_" + tag);
        if (p.feature) cols.push_back("cycle_feature_" + tag);
        cols.push_back("cycle_cross_" + tag);
    }
    return cols;
}

/// Header naming "first_i_j" as condition or data cycle according to `mode`.
inline std::string history_header(const LossReport& r, Mode mode) {
    std::string out;
    for (auto c : history_columns(r)) {
        if (c.rfind("first_", 0) == 0)
            c = (mode == Mode::Supervised ? "condition_" : "cycle_data_") + c.substr(6);
        out += (out.empty() ? "" : ",") + c;
    }
    return out;
}

inline std::string history_line(const HistoryRow& row) {
    const LossReport& r = row.report;
    std::string out = std::to_string(row.step);
    auto put = [&](double v) { out += "," + fmt17(v); };
    put(r.generator);
    put(r.critic);
    put(r.adversarial);
    put(r.regularizer);
    for (double v : r.ali) put(v);
    for (double v : r.dmae) put(v);
    for (const auto& p : r.pairs) {
        put(p.condition_or_data);
        if (p.feature) put(*p.feature);
        put(p.cross);
    }
    return out;
}

// ---- metrics ---------------------------------------------------------------

inline constexpr const char* kPairMetricsHeader =
    "source,target,mse_cycle,mse_ground_truth,mse_identity_baseline,mmd2_rbf_gs_substitute";
inline constexpr const char* kDomainMetricsHeader = "domain,mmd2_rbf_gs_substitute_marginal";
inline constexpr const char* kParamScaleHeader = "model,m,params,generator_params,critic_params";

inline std::string pair_metrics_csv(const MetricTable& t) {
    std::ostringstream os;
    os << kPairMetricsHeader << '\n';
    for (const auto& p : t.pairs)
        os << p.source << ',' << p.target << ',' << fmt17(p.mse_cycle) << ',' << fmt17(p.mse_ground_truth) << ','
           << fmt17(p.identity_baseline) << ',' << fmt17(p.mmd2) << '\n';
    return os.str();
}

inline std::string domain_metrics_csv(const MetricTable& t) {
    std::ostringstream os;
    os << kDomainMetricsHeader << '\n';
    for (const auto& d : t.domains) os << d.domain << ',' << fmt17(d.mmd2_marginal) << '\n';
    return os.str();
}

inline std::string param_scale_csv(const std::vector<ParamScaleRow>& rows) {
    std::ostringstream os;
    os << kParamScaleHeader << '\n';
    for (const auto& r : rows)
        os << r.model << ',' << r.m << ',' << r.params() << ',' << r.generator_params << ',' << r.critic_params << '\n';
    return os.str();
}

// ---- SVG scatter -----------------------------------------------------------

struct ScatterSeries {
    std::string label;
    std::string color;
    Tensor points;  // [n,2]
};

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

/// Standalone SVG scatter plot with a legend. Output depends only on the input.
inline std::string scatter_svg(const std::string& title, const std::vector<ScatterSeries>& series,
                               double width = 480.0, double height = 480.0) {
    double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
    for (const auto& s : series)
        for (std::size_t r = 0; r < s.points.rows(); ++r) {
            lo_x = std::min(lo_x, s.points.at(r, 0));
            hi_x = std::max(hi_x, s.points.at(r, 0));
            lo_y = std::min(lo_y, s.points.at(r, 1));
            hi_y = std::max(hi_y, s.points.at(r, 1));
        }
    if (lo_x > hi_x) lo_x = -1, hi_x = 1, lo_y = -1, hi_y = 1;
    const double pad = 40.0;
    const double span_x = std::max(hi_x - lo_x, 1e-9), span_y = std::max(hi_y - lo_y, 1e-9);
    auto px = [&](double x) { return pad + (x - lo_x) / span_x * (width - 2 * pad); };
    auto py = [&](double y) { return height - pad - (y - lo_y) / span_y * (height - 2 * pad); };
    char buf[160];
    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"13\">"
       << xml_escape(title) << "</text>\n";
    std::snprintf(buf, sizeof buf, "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"none\" stroke=\"#888\"/>\n",
                  pad, pad, width - 2 * pad, height - 2 * pad);
    os << buf;
    for (const auto& s : series) {
        os << "<g fill=\"" << xml_escape(s.color) << "\" fill-opacity=\"0.5\">\n";
        for (std::size_t r = 0; r < s.points.rows(); ++r) {
            std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"1.6\"/>\n", px(s.points.at(r, 0)),
                          py(s.points.at(r, 1)));
            os << buf;
        }
        os << "</g>\n";
    }
    double ly = pad + 14;
    for (const auto& s : series) {
        std::snprintf(buf, sizeof buf, "<rect x=\"%.2f\" y=\"%.2f\" width=\"10\" height=\"10\" fill=\"%s\"/>\n",
                      width - pad - 150, ly - 9, xml_escape(s.color).c_str());
        os << buf;
        std::snprintf(buf, sizeof buf, "<text x=\"%.2f\" y=\"%.2f\" font-family=\"sans-serif\" font-size=\"11\">",
                      width - pad - 135, ly);
        os << buf << xml_escape(s.label) << "</text>\n";
        ly += 16;
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace mmiali
