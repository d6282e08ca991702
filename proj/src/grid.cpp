#include "contagion_lens/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "contagion_lens/errors.hpp"

namespace clens {

AccuracyGrid::AccuracyGrid(std::string rl, std::string cl, std::vector<double> r, std::vector<double> c)
    : row_label(std::move(rl)), col_label(std::move(cl)), rows(std::move(r)), cols(std::move(c)) {
    value.assign(rows.size(), std::vector<double>(cols.size(), 0.0));
    stddev = value;
    n.assign(rows.size(), std::vector<std::size_t>(cols.size(), 0));
}

double AccuracyGrid::mean() const {
    double s = 0.0;
    std::size_t cells = 0;
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
            if (n[i][j] > 0) {
                s += value[i][j];
                ++cells;
            }
    return cells ? s / static_cast<double>(cells) : std::nan("");
}

double AccuracyGrid::min() const {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
            if (n[i][j] > 0)
                m = std::min(m, value[i][j]);
    return m;
}

void AccuracyGrid::set(std::size_t i, std::size_t j, const std::vector<double>& samples) {
    n.at(i).at(j) = samples.size();
    if (samples.empty())
        return;
    double mu = 0.0;
    for (double s : samples)
        mu += s;
    mu /= static_cast<double>(samples.size());
    double ss = 0.0;
    for (double s : samples)
        ss += (s - mu) * (s - mu);
    value[i][j] = mu;
    stddev[i][j] = samples.size() > 1 ? std::sqrt(ss / static_cast<double>(samples.size() - 1)) : 0.0;
}

void write_grid_csv(const AccuracyGrid& g, std::ostream& out) {
    out << g.row_label << ',' << g.col_label << ",value,std,n\n";
    out << std::setprecision(17);
    for (std::size_t i = 0; i < g.rows.size(); ++i)
        for (std::size_t j = 0; j < g.cols.size(); ++j)
            out << g.rows[i] << ',' << g.cols[j] << ',' << g.value[i][j] << ',' << g.stddev[i][j] << ','
                << g.n[i][j] << '\n';
}

AccuracyGrid read_grid_csv(std::istream& in, const std::string& source) {
    std::string line;
    if (!std::getline(in, line))
        throw ParseError(source, 1, "missing header");
    std::vector<std::string> head;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            head.push_back(cell);
    }
    if (head.size() != 5 || head[2] != "value")
        throw ParseError(source, 1, "unexpected grid header");
    struct Row {
        double r, c, v, s;
        std::size_t n;
    };
    std::vector<Row> cells;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        std::stringstream ss(line);
        Row row{};
        char c1, c2, c3, c4;
        if (!(ss >> row.r >> c1 >> row.c >> c2 >> row.v >> c3 >> row.s >> c4 >> row.n) || c1 != ',' || c2 != ',' ||
            c3 != ',' || c4 != ',')
            throw ParseError(source, lineno, "malformed grid row");
        cells.push_back(row);
    }
    std::vector<double> rs, cs;
    for (auto& c : cells) {
        rs.push_back(c.r);
        cs.push_back(c.c);
    }
    auto uniq = [](std::vector<double>& v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    };
    uniq(rs);
    uniq(cs);
    AccuracyGrid g(head[0], head[1], rs, cs);
    for (auto& c : cells) {
        auto i = static_cast<std::size_t>(std::lower_bound(rs.begin(), rs.end(), c.r) - rs.begin());
        auto j = static_cast<std::size_t>(std::lower_bound(cs.begin(), cs.end(), c.c) - cs.begin());
        g.value[i][j] = c.v;
        g.stddev[i][j] = c.s;
        g.n[i][j] = c.n;
    }
    return g;
}

namespace {

std::string colour(double v) {
    // White at 0.33 to dark blue at 1.
    double t = std::clamp((v - 0.33) / 0.67, 0.0, 1.0);
    auto ch = [&](double lo, double hi) { return static_cast<int>(std::lround(lo + (hi - lo) * t)); };
    std::ostringstream ss;
    ss << "rgb(" << ch(255, 8) << ',' << ch(255, 48) << ',' << ch(255, 107) << ')';
    return ss.str();
}

std::string label(double x) {
    std::ostringstream ss;
    ss << std::setprecision(3) << x;
    return ss.str();
}

} // namespace

void emit_heatmap(const AccuracyGrid& g, const std::filesystem::path& path, bool svg, const std::string& title) {
    {
        std::ofstream out(path);
        if (!out)
            throw IoError("cannot write " + path.string());
        write_grid_csv(g, out);
        if (!out)
            throw IoError("failed writing " + path.string());
    }
    if (!svg)
        return;
    auto svg_path = path;
    svg_path.replace_extension(".svg");
    std::ofstream out(svg_path);
    if (!out)
        throw IoError("cannot write " + svg_path.string());
    constexpr int cell = 60, margin = 70;
    const int w = margin + cell * static_cast<int>(g.cols.size()) + 20;
    const int h = margin + cell * static_cast<int>(g.rows.size()) + 50;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    if (!title.empty())
        out << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\">" << title << "</text>\n";
    const int top = 40;
    for (std::size_t i = 0; i < g.rows.size(); ++i) {
        // Ascending rows go bottom to top.
        const int y = top + cell * static_cast<int>(g.rows.size() - 1 - i);
        out << "<text x=\"" << margin - 8 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"end\">"
            << label(g.rows[i]) << "</text>\n";
        for (std::size_t j = 0; j < g.cols.size(); ++j) {
            const int x = margin + cell * static_cast<int>(j);
            const bool has = g.n[i][j] > 0;
            out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
                << "\" fill=\"" << (has ? colour(g.value[i][j]) : "rgb(220,220,220)") << "\" stroke=\"white\"/>\n";
            if (has)
                out << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"middle\" fill=\""
                    << (g.value[i][j] > 0.7 ? "white" : "black") << "\">" << label(g.value[i][j]) << "</text>\n";
        }
    }
    const int base = top + cell * static_cast<int>(g.rows.size());
    for (std::size_t j = 0; j < g.cols.size(); ++j)
        out << "<text x=\"" << margin + cell * static_cast<int>(j) + cell / 2 << "\" y=\"" << base + 16
            << "\" text-anchor=\"middle\">" << label(g.cols[j]) << "</text>\n";
    out << "<text x=\"" << margin + cell * static_cast<int>(g.cols.size()) / 2 << "\" y=\"" << base + 36
        << "\" text-anchor=\"middle\">" << g.col_label << "</text>\n";
    out << "<text x=\"16\" y=\"" << top + cell * static_cast<int>(g.rows.size()) / 2
        << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << top + cell * static_cast<int>(g.rows.size()) / 2
        << ")\">" << g.row_label << "</text>\n";
    out << "</svg>\n";
    if (!out)
        throw IoError("failed writing " + svg_path.string());
}

} // namespace clens
