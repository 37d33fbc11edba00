#include "somnoscope/cluster.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

namespace somnoscope {

void export_latents(const Eigen::MatrixXd& latents, const Eigen::MatrixXd& posteriors,
                    const std::filesystem::path& path) {
    if (latents.cols() != posteriors.cols()) throw std::invalid_argument("latents/posteriors not aligned");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write latents: " + path.string());
    for (Eigen::Index j = 0; j < latents.rows(); ++j) out << 'z' << j << ',';
    out << "cluster";
    for (Eigen::Index k = 0; k < posteriors.rows(); ++k) out << ",p" << k;
    out << '\n';
    out << std::setprecision(17);
    for (Eigen::Index n = 0; n < latents.cols(); ++n) {
        for (Eigen::Index j = 0; j < latents.rows(); ++j) out << latents(j, n) << ',';
        out << argmax_cluster(posteriors.col(n));
        for (Eigen::Index k = 0; k < posteriors.rows(); ++k) out << ',' << posteriors(k, n);
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

LatentTable read_latents_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open latents: " + path.string());
    std::string header;
    std::getline(in, header);
    Eigen::Index d = 0, K = 0;
    {
        std::stringstream hs(header);
        std::string tok;
        while (std::getline(hs, tok, ',')) {
            if (!tok.empty() && tok[0] == 'z') ++d;
            if (!tok.empty() && tok[0] == 'p') ++K;
        }
    }
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string tok;
        std::vector<double> r;
        while (std::getline(ls, tok, ',')) r.push_back(std::stod(tok));
        if (static_cast<Eigen::Index>(r.size()) != d + 1 + K) throw std::runtime_error("malformed latents row");
        rows.push_back(std::move(r));
    }
    LatentTable t;
    const auto n = static_cast<Eigen::Index>(rows.size());
    t.latents.resize(d, n);
    t.posteriors.resize(K, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < d; ++j) t.latents(j, i) = r[static_cast<std::size_t>(j)];
        t.cluster.push_back(static_cast<Eigen::Index>(r[static_cast<std::size_t>(d)]));
        for (Eigen::Index k = 0; k < K; ++k) t.posteriors(k, i) = r[static_cast<std::size_t>(d + 1 + k)];
    }
    return t;
}

} // namespace somnoscope
