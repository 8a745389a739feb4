#include "passivion/system_io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "passivion/errors.hpp"

namespace passivion {

using nlohmann::json;

namespace {

Matrix matrix_field(const json& doc, const char* name, Index rows, Index cols) {
    if (!doc.contains(name)) throw Error(ErrorCode::ParseError, std::string("missing field '") + name + "'");
    const json& arr = doc.at(name);
    if (!arr.is_array()) throw Error(ErrorCode::ParseError, std::string("field '") + name + "' must be an array");
    std::vector<double> flat;
    for (const auto& v : arr) {
        if (v.is_array()) {
            for (const auto& w : v) flat.push_back(w.get<double>());
        } else {
            flat.push_back(v.get<double>());
        }
    }
    if (static_cast<Index>(flat.size()) != rows * cols) {
        std::ostringstream msg;
        msg << "field '" << name << "' has " << flat.size() << " entries, expected " << rows << "x" << cols;
        throw Error(ErrorCode::DimensionMismatch, msg.str());
    }
    Matrix M(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) M(i, j) = flat[std::size_t(i * cols + j)];
    return M;
}

json parse_json(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ParseError, e.what());
    }
}

RealnessMode parse_mode(const std::string& s) {
    if (s == "positive_real") return RealnessMode::PositiveReal;
    if (s == "bounded_real") return RealnessMode::BoundedReal;
    throw Error(ErrorCode::ParseError, "mode must be \"positive_real\" or \"bounded_real\", got \"" + s + "\"");
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void atomic_write(const std::filesystem::path& path, const std::string& contents) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
        out << contents;
        if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::IoError, "rename to " + path.string() + " failed: " + ec.message());
}

StateSpaceSystem parse_system(const std::string& text, bool validate) {
    const json doc = parse_json(text);
    try {
        const Index n = doc.at("n").get<Index>();
        const Index m = doc.at("m").get<Index>();
        const Index p = doc.at("p").get<Index>();
        const RealnessMode mode = parse_mode(doc.at("mode").get<std::string>());
        Matrix A = matrix_field(doc, "A", n, n);
        Matrix B = matrix_field(doc, "B", n, m);
        Matrix C = matrix_field(doc, "C", p, n);
        Matrix D = matrix_field(doc, "D", p, m);
        return validate ? StateSpaceSystem::create(A, B, C, D, mode) : StateSpaceSystem::unchecked(A, B, C, D, mode);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, e.what());
    }
}

StateSpaceSystem read_system(const std::filesystem::path& path, bool validate) {
    return parse_system(read_file(path), validate);
}

std::string format_number(double v) {
    std::ostringstream ss;
    ss << std::setprecision(17) << std::scientific << v;
    return ss.str();
}

std::string system_to_json(const StateSpaceSystem& sys) {
    std::ostringstream out;
    out << "{\n  \"n\": " << sys.n() << ",\n  \"m\": " << sys.m() << ",\n  \"p\": " << sys.p()
        << ",\n  \"mode\": \"" << to_string(sys.mode()) << "\"";
    auto emit = [&](const char* name, const Matrix& M) {
        out << ",\n  \"" << name << "\": [";
        for (Index i = 0; i < M.rows(); ++i)
            for (Index j = 0; j < M.cols(); ++j) out << (i + j == 0 ? "" : ", ") << format_number(M(i, j));
        out << "]";
    };
    emit("A", sys.A());
    emit("B", sys.B());
    emit("C", sys.C());
    emit("D", sys.D());
    out << "\n}\n";
    return out.str();
}

void write_system(const std::filesystem::path& path, const StateSpaceSystem& sys) {
    atomic_write(path, system_to_json(sys));
}

StateSpaceSystem parse_initial_system(const std::string& text, const StateSpaceSystem& base) {
    const json doc = parse_json(text);
    try {
        Matrix A = doc.contains("A") ? matrix_field(doc, "A", base.n(), base.n()) : base.A();
        Matrix B = doc.contains("B") ? matrix_field(doc, "B", base.n(), base.m()) : base.B();
        Matrix C = doc.contains("C") ? matrix_field(doc, "C", base.p(), base.n()) : base.C();
        Matrix D = doc.contains("D") ? matrix_field(doc, "D", base.p(), base.m()) : base.D();
        return StateSpaceSystem::unchecked(A, B, C, D, base.mode());
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, e.what());
    }
}

StateSpaceSystem read_initial_system(const std::filesystem::path& path, const StateSpaceSystem& base) {
    return parse_initial_system(read_file(path), base);
}

PerturbationStructure parse_structure(const std::string& arg, const StateSpaceSystem& sys) {
    if (arg == "full") return PerturbationStructure::full(sys.n(), sys.m(), sys.p());
    if (arg == "gramian_c") return PerturbationStructure::gramian_c(sys);
    std::string text = arg;
    if (arg.empty() || arg.front() != '{') {
        if (!std::filesystem::exists(arg))
            throw Error(ErrorCode::InvalidConfig, "structure must be full, gramian_c, a JSON object or a file: " + arg);
        text = read_file(arg);
    }
    const json doc = parse_json(text);
    try {
        const std::string kind = doc.at("kind").get<std::string>();
        if (kind == "full") return PerturbationStructure::full(sys.n(), sys.m(), sys.p());
        if (kind == "gramian_c") return PerturbationStructure::gramian_c(sys);
        if (kind == "sparsity") {
            std::vector<PerturbationStructure::Entry> mask;
            for (const auto& e : doc.at("mask")) {
                if (!e.is_array() || e.size() != 2) throw Error(ErrorCode::ParseError, "mask entries must be [i, j]");
                mask.emplace_back(e[0].get<Index>(), e[1].get<Index>());
            }
            return PerturbationStructure::sparsity(sys.n(), sys.m(), sys.p(), std::move(mask));
        }
        throw Error(ErrorCode::ParseError, "unknown structure kind \"" + kind + "\"");
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, e.what());
    }
}

}  // namespace passivion
