#include "vabc/artifacts.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "vabc/graph.hpp"
#include "vabc/io.hpp"

namespace vabc {

void GridSpec::validate() const {
    if (!(min_x < max_x) || !(min_y < max_y)) {
        throw ContractError("GridSpec: min must be strictly below max on each axis");
    }
    if (res_x < 2 || res_y < 2) throw ContractError("GridSpec: resolution must be >= 2");
}

std::vector<FieldRow> gradient_field(const VabcModel& model, const GridSpec& grid, int y,
                                     float gamma, float beta) {
    grid.validate();
    if (model.input_dim != 2) {
        throw ContractError("gradient_field: requires a 2-D input model");
    }
    std::vector<FieldRow> rows;
    rows.reserve(grid.res_x * grid.res_y);
    Tensor ycol = Tensor::full({1, 1}, static_cast<float>(y));
    Tensor eps;  // unused, z = mu
    for (std::size_t iy = 0; iy < grid.res_y; ++iy) {
        float x2 = grid.min_y + (grid.max_y - grid.min_y) * static_cast<float>(iy) /
                                    static_cast<float>(grid.res_y - 1);
        for (std::size_t ix = 0; ix < grid.res_x; ++ix) {
            float x1 = grid.min_x + (grid.max_x - grid.min_x) * static_cast<float>(ix) /
                                        static_cast<float>(grid.res_x - 1);
            FieldRow row{x1, x2, 0.0f, 0.0f, true};
            try {
                Tensor x = Tensor::matrix(1, 2, {x1, x2});
                LossGraph g = build_vabc_loss(model, x, ycol, eps, gamma, beta,
                                              /*x_requires_grad=*/true,
                                              /*deterministic_z=*/true);
                ad::backward(g.total);
                row.g1 = -g.x_leaf->grad.data[0];
                row.g2 = -g.x_leaf->grad.data[1];
                if (!std::isfinite(row.g1) || !std::isfinite(row.g2)) row.finite = false;
            } catch (const NumericError&) {
                row.finite = false;
            }
            rows.push_back(row);
        }
    }
    return rows;
}

void write_field_csv(const std::vector<FieldRow>& rows, int y, float gamma, float beta,
                     const std::string& path) {
    std::ostringstream out;
    out << "# deterministic encoding: z = mu(x), no sampling\n";
    out << "x1,x2,g1,g2,y,gamma,beta\n";
    for (const auto& r : rows) {
        if (!r.finite) {
            out << fmt9(r.x1) << "," << fmt9(r.x2) << ",nan,nan," << y << "," << fmt9(gamma)
                << "," << fmt9(beta) << "\n";
            continue;
        }
        out << fmt9(r.x1) << "," << fmt9(r.x2) << "," << fmt9(r.g1) << "," << fmt9(r.g2)
            << "," << y << "," << fmt9(gamma) << "," << fmt9(beta) << "\n";
    }
    write_text_file(path, out.str());
}

ManifoldGrid manifold_grid(const VabcModel& model, float lo, float hi, std::size_t res) {
    if (model.latent_dim != 2) {
        throw ContractError("manifold_grid: requires latent_dim == 2, model has " +
                            std::to_string(model.latent_dim));
    }
    if (res < 2) throw ContractError("manifold_grid: resolution must be >= 2");
    ManifoldGrid g;
    g.res = res;
    g.cell_dim = model.input_dim;
    g.cells.reserve(res * res);
    // z1 varies along columns, z2 decreases down rows so the mosaic reads
    // like a plot with z2 up
    for (std::size_t r = 0; r < res; ++r) {
        float z2 = hi - (hi - lo) * static_cast<float>(r) / static_cast<float>(res - 1);
        for (std::size_t c = 0; c < res; ++c) {
            float z1 = lo + (hi - lo) * static_cast<float>(c) / static_cast<float>(res - 1);
            Tensor z = Tensor::matrix(1, 2, {z1, z2});
            g.cells.push_back(decode_mean(model, z));
        }
    }
    return g;
}

void write_manifold_csv(const ManifoldGrid& grid, const std::string& path) {
    std::ostringstream out;
    out << "# deterministic encoding: decoder means, cell-major rows\n";
    for (const auto& cell : grid.cells) {
        for (std::size_t i = 0; i < cell.size(); ++i) {
            if (i) out << ",";
            out << fmt9(cell.data[i]);
        }
        out << "\n";
    }
    write_text_file(path, out.str());
}

void write_manifold_png(const ManifoldGrid& grid, const std::string& path) {
    if (grid.cell_dim != 784) {
        throw ContractError("manifold PNG: cells must be 28x28 images");
    }
    std::size_t side = grid.res * 28;
    std::vector<unsigned char> pixels(side * side, 0);
    for (std::size_t r = 0; r < grid.res; ++r)
        for (std::size_t c = 0; c < grid.res; ++c) {
            const Tensor& cell = grid.cells[r * grid.res + c];
            for (std::size_t pr = 0; pr < 28; ++pr)
                for (std::size_t pc = 0; pc < 28; ++pc) {
                    float v = std::clamp(cell.data[pr * 28 + pc], 0.0f, 1.0f);
                    pixels[(r * 28 + pr) * side + c * 28 + pc] =
                        static_cast<unsigned char>(std::lround(v * 255.0f));
                }
        }
    write_gray_png(path, side, side, pixels);
}

ReconstructionPanel reconstruction_panel(const VabcModel& model,
                                         const std::vector<std::vector<float>>& examples,
                                         float binarize_threshold) {
    if (examples.empty()) throw ContractError("reconstruction_panel: no examples");
    ReconstructionPanel p;
    p.threshold = binarize_threshold;
    Tensor x = Tensor::zeros({examples.size(), model.input_dim});
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (examples[i].size() != model.input_dim) {
            throw ShapeError("reconstruction_panel: example width mismatch");
        }
        std::copy(examples[i].begin(), examples[i].end(),
                  x.data.begin() + i * model.input_dim);
    }
    auto [mu, sigma] = encode(model, x);
    Tensor xt = decode_mean(model, mu);
    for (std::size_t i = 0; i < examples.size(); ++i) {
        p.originals.push_back(examples[i]);
        std::vector<float> rec(xt.data.begin() + i * model.input_dim,
                               xt.data.begin() + (i + 1) * model.input_dim);
        std::vector<float> bin(rec.size());
        for (std::size_t j = 0; j < rec.size(); ++j)
            bin[j] = rec[j] >= binarize_threshold ? 1.0f : 0.0f;
        p.reconstructions.push_back(std::move(rec));
        p.binarized.push_back(std::move(bin));
    }
    return p;
}

std::vector<EllipseRow> latent_ellipses(const VabcModel& model, const DataFold& examples) {
    if (model.latent_dim != 2) {
        throw ContractError("latent_ellipses: requires latent_dim == 2");
    }
    std::vector<EllipseRow> rows;
    rows.reserve(examples.examples.size());
    std::size_t bs = 512;
    for (std::size_t start = 0; start < examples.examples.size(); start += bs) {
        std::size_t end = std::min(start + bs, examples.examples.size());
        Tensor x = Tensor::zeros({end - start, model.input_dim});
        for (std::size_t i = start; i < end; ++i)
            std::copy(examples.examples[i].x.begin(), examples.examples[i].x.end(),
                      x.data.begin() + (i - start) * model.input_dim);
        auto [mu, sigma] = encode(model, x);
        for (std::size_t i = start; i < end; ++i) {
            std::size_t r = i - start;
            rows.push_back({mu.at(r, 0), mu.at(r, 1), 2.0f * sigma.at(r, 0),
                            2.0f * sigma.at(r, 1), examples.examples[i].concept_label,
                            examples.examples[i].digit});
        }
    }
    return rows;
}

void write_ellipses_csv(const std::vector<EllipseRow>& rows, const std::string& path) {
    std::ostringstream out;
    out << "# deterministic encoding: mu and 2*sigma from the encoder, no sampling\n";
    out << "mu1,mu2,two_sigma1,two_sigma2,concept,digit\n";
    for (const auto& r : rows) {
        out << fmt9(r.mu1) << "," << fmt9(r.mu2) << "," << fmt9(r.two_sigma1) << ","
            << fmt9(r.two_sigma2) << ","
            << (r.concept_label == Concept::Positive ? "positive" : "negative") << ","
            << r.digit << "\n";
    }
    write_text_file(path, out.str());
}

static void png_chunk(std::ofstream& out, const char type[4],
                      const std::vector<unsigned char>& data) {
    auto be32 = [&out](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
        out.write(reinterpret_cast<char*>(b), 4);
    };
    be32(static_cast<std::uint32_t>(data.size()));
    out.write(type, 4);
    if (!data.empty()) {
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size()));
    }
    std::uint32_t crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
    if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
    be32(crc);
}

void write_gray_png(const std::string& path, std::size_t width, std::size_t height,
                    const std::vector<unsigned char>& pixels) {
    if (pixels.size() != width * height) {
        throw ContractError("write_gray_png: pixel buffer size mismatch");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path);
    static const unsigned char sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<unsigned char> ihdr(13, 0);
    auto put32 = [](std::vector<unsigned char>& v, std::size_t off, std::uint32_t x) {
        v[off] = x >> 24; v[off + 1] = x >> 16; v[off + 2] = x >> 8; v[off + 3] = x;
    };
    put32(ihdr, 0, static_cast<std::uint32_t>(width));
    put32(ihdr, 4, static_cast<std::uint32_t>(height));
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 0;   // grayscale
    png_chunk(out, "IHDR", ihdr);

    // filter byte 0 per scanline, then one zlib stream
    std::vector<unsigned char> raw;
    raw.reserve(height * (width + 1));
    for (std::size_t r = 0; r < height; ++r) {
        raw.push_back(0);
        raw.insert(raw.end(), pixels.begin() + r * width, pixels.begin() + (r + 1) * width);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 9) !=
        Z_OK) {
        throw FormatError("PNG: zlib compression failed");
    }
    compressed.resize(bound);
    png_chunk(out, "IDAT", compressed);
    png_chunk(out, "IEND", {});
}

}  // namespace vabc
