#include "mscript/packaging.hpp"

#include <algorithm>

#include "mscript/blobstore.hpp"
#include "mscript/env.hpp"
#include "mscript/errors.hpp"
#include "mscript/parser.hpp"

namespace mscript {

namespace {

bool valid_identifier(const std::string& s) {
    if (s.empty()) return false;
    if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
    for (char c : s) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
    }
    return true;
}

std::vector<std::string> split_on_dots(const std::string& name) {
    std::vector<std::string> parts;
    size_t start = 0;
    while (true) {
        size_t dot = name.find('.', start);
        if (dot == std::string::npos) {
            parts.push_back(name.substr(start));
            return parts;
        }
        parts.push_back(name.substr(start, dot - start));
        start = dot + 1;
    }
}

std::string dotted_to_code_entry(const std::string& name) {
    std::string out = "code/";
    for (char c : name) out += (c == '.') ? '/' : c;
    return out + ".ms";
}

bool match_from(const std::vector<std::string>& pattern, size_t pi,
                const std::vector<std::string>& name, size_t ni) {
    if (pi == pattern.size()) return ni == name.size();
    if (pattern[pi] == "**") {
        for (size_t k = ni; k <= name.size(); ++k) {
            if (match_from(pattern, pi + 1, name, k)) return true;
        }
        return false;
    }
    if (ni == name.size()) return false;
    if (pattern[pi] == "*" || pattern[pi] == name[ni]) {
        return match_from(pattern, pi + 1, name, ni + 1);
    }
    return false;
}

std::set<std::string> parse_module_list(const std::vector<uint8_t>& bytes) {
    std::set<std::string> out;
    std::string line;
    for (uint8_t b : bytes) {
        if (b == '\n') {
            if (!line.empty()) out.insert(line);
            line.clear();
        } else {
            line += static_cast<char>(b);
        }
    }
    if (!line.empty()) out.insert(line);
    return out;
}

std::vector<uint8_t> render_module_list(const std::set<std::string>& names) {
    std::vector<uint8_t> out;
    for (const std::string& name : names) {
        out.insert(out.end(), name.begin(), name.end());
        out.push_back('\n');
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// ModulePattern

ModulePattern::ModulePattern(const std::string& pattern) : text_(pattern) {
    if (pattern.empty()) throw PatternError("empty module pattern");
    segments_ = split_on_dots(pattern);
    for (const std::string& seg : segments_) {
        if (seg == "*" || seg == "**") continue;
        if (!valid_identifier(seg)) {
            throw PatternError("bad segment '" + seg + "' in pattern '" + pattern + "'");
        }
    }
}

bool ModulePattern::matches(const std::string& dotted_name) const {
    if (dotted_name.empty()) return false;
    return match_from(segments_, 0, split_on_dots(dotted_name), 0);
}

ModuleClass classify_module(const std::string& name,
                            const std::vector<ModulePattern>& extern_patterns,
                            const std::vector<ModulePattern>& mock_patterns) {
    for (const ModulePattern& p : extern_patterns) {
        if (p.matches(name)) return ModuleClass::extern_;
    }
    for (const ModulePattern& p : mock_patterns) {
        if (p.matches(name)) return ModuleClass::mock;
    }
    return ModuleClass::intern;
}

// ---------------------------------------------------------------------------
// Exporter

Exporter::Exporter(std::filesystem::path target, SourceProvider provider,
                   std::vector<GlobalResolver*> importers)
    : target_(std::move(target)), provider_(std::move(provider)), importers_(std::move(importers)) {
    // The native tensor module ships with every host; packages link against it.
    extern_patterns_.emplace_back("nt");
    extern_names_.insert("nt");
}

void Exporter::mark_extern(const std::vector<std::string>& patterns) {
    for (const std::string& p : patterns) extern_patterns_.emplace_back(p);
}

void Exporter::mark_mock(const std::vector<std::string>& patterns) {
    for (const std::string& p : patterns) mock_patterns_.emplace_back(p);
}

void Exporter::require(const std::string& module, const std::string& needed_by) {
    if (origin_.count(module)) return;
    origin_[module] = needed_by;
    worklist_.push_back(Requirement{module, needed_by});
}

std::string Exporter::chain_for(const std::string& module) const {
    std::string out = module;
    std::string current = module;
    for (int depth = 0; depth < 64; ++depth) {
        auto it = origin_.find(current);
        if (it == origin_.end()) break;
        out += " <- " + it->second;
        // Follow links of the form "import in <module>".
        constexpr const char* kPrefix = "import in ";
        if (it->second.rfind(kPrefix, 0) != 0) break;
        current = it->second.substr(std::string(kPrefix).size());
    }
    return out;
}

void Exporter::save_pickle(const std::string& package, const std::string& resource,
                           const Value& value) {
    if (finalized_) throw RuntimeError("exporter already finalized");
    PickleStream stream = pickle(value, importers_);
    const std::string entry = package + "/" + resource;
    for (const StagedPickle& staged : pickles_) {
        if (staged.entry_name == entry) throw FormatError("duplicate resource: " + entry);
    }
    for (const GlobalRef& ref : stream.global_refs) {
        require(ref.module, "GLOBAL in resource " + entry);
    }
    // Assign data indices in stream-traversal order and retain the blobs
    // until the archive is written.
    auto rewritten = rewrite_blob_keys(stream.bytes, [&](BlobKey key) {
        auto it = data_index_.find(key);
        if (it == data_index_.end()) {
            uint64_t index = data_index_.size();
            it = data_index_.emplace(key, index).first;
            staged_blobs_.push_back(TensorHandle::share(key));
        }
        return it->second;
    });
    pickles_.push_back(StagedPickle{entry, std::move(rewritten)});
}

void Exporter::save_module(const std::string& name) {
    if (finalized_) throw RuntimeError("exporter already finalized");
    ModuleClass cls = classify_module(name, extern_patterns_, mock_patterns_);
    if (cls == ModuleClass::intern && !provider_(name)) {
        throw DependencyError("module " + name + " <- save_module: no source available");
    }
    require(name, "save_module");
}

void Exporter::finalize() {
    if (finalized_) throw RuntimeError("exporter already finalized");
    std::vector<std::string> failures;
    for (size_t i = 0; i < worklist_.size(); ++i) {
        const std::string module = worklist_[i].module;
        switch (classify_module(module, extern_patterns_, mock_patterns_)) {
            case ModuleClass::extern_:
                extern_names_.insert(module);
                break;
            case ModuleClass::mock:
                mock_names_.insert(module);
                break;
            case ModuleClass::intern: {
                if (sources_.count(module)) break;
                auto src = provider_(module);
                if (!src) {
                    failures.push_back(module);
                    break;
                }
                sources_[module] = *src;
                std::shared_ptr<const ModuleAST> ast;
                try {
                    ast = parse_module(module, *src);
                } catch (const SyntaxError& e) {
                    throw DependencyError("module " + module + " failed to parse: " + e.what() +
                                          " (" + chain_for(module) + ")");
                }
                for (const ImportDecl& decl : ast->imports) {
                    require(decl.module, "import in " + module);
                }
                break;
            }
        }
    }
    if (!failures.empty()) {
        std::string msg = "unresolvable modules:";
        for (const std::string& module : failures) {
            msg += "\n  " + chain_for(module);
        }
        throw DependencyError(msg);
    }

    ZipWriter writer;
    for (const auto& [module, source] : sources_) {
        writer.add(dotted_to_code_entry(module),
                   std::vector<uint8_t>(source.begin(), source.end()));
    }
    for (const StagedPickle& staged : pickles_) {
        writer.add(staged.entry_name, staged.bytes);
    }
    for (const auto& [key, index] : data_index_) {
        writer.add("data/" + std::to_string(index) + ".nt",
                   encode_ntb1(TensorHandle::share(key)));
    }
    writer.add("extern_modules", render_module_list(extern_names_));
    writer.add("mocked_modules", render_module_list(mock_names_));
    writer.write(target_);

    staged_blobs_.clear();
    data_index_.clear();
    finalized_ = true;
}

// ---------------------------------------------------------------------------
// ArchiveData

std::shared_ptr<const ArchiveData> ArchiveData::open(const std::filesystem::path& path) {
    auto data = std::make_shared<ArchiveData>();
    data->path = path.string();
    data->zip = std::make_shared<ZipReader>(path);
    if (!data->zip->contains("extern_modules") || !data->zip->contains("mocked_modules")) {
        throw FormatError("archive " + data->path + " is missing its module list files");
    }
    data->extern_modules = parse_module_list(data->zip->read("extern_modules"));
    data->mocked_modules = parse_module_list(data->zip->read("mocked_modules"));
    return data;
}

bool ArchiveData::is_mocked(const std::string& name) const {
    if (mocked_modules.count(name)) return true;
    // Submodules of a mocked module are mocked too.
    for (size_t dot = name.find('.'); dot != std::string::npos; dot = name.find('.', dot + 1)) {
        if (mocked_modules.count(name.substr(0, dot))) return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// HermeticImporter

HermeticImporter::HermeticImporter(Interpreter& interp, const std::filesystem::path& archive_path)
    : interp_(interp), archive_(ArchiveData::open(archive_path)) {}

HermeticImporter::HermeticImporter(Interpreter& interp, std::shared_ptr<const ArchiveData> archive)
    : interp_(interp), archive_(std::move(archive)) {}

std::shared_ptr<ModuleEnv> HermeticImporter::import_module(const std::string& name) {
    GilGuard gil(interp_);
    auto it = modules_.find(name);
    if (it != modules_.end()) return it->second;

    if (archive_->extern_modules.count(name)) {
        auto env = interp_.system_module(name);
        if (!env) {
            throw ImportError("extern module '" + name +
                              "' is not available in the system registry (archive " +
                              archive_->path + ")",
                              name);
        }
        system_lookups_.insert(name);
        modules_[name] = env;
        return env;
    }
    if (archive_->is_mocked(name)) {
        auto env = ModuleEnv::make_mock_stub(name);
        modules_[name] = env;
        return env;
    }

    const std::string entry = dotted_to_code_entry(name);
    if (!archive_->zip->contains(entry)) {
        throw ImportError("no module named '" + name + "' in archive " + archive_->path, name);
    }
    if (!in_progress_.insert(name).second) {
        throw ImportError("circular import of '" + name + "' in archive " + archive_->path, name);
    }
    std::shared_ptr<ModuleEnv> env;
    try {
        auto bytes = archive_->zip->read(entry);
        auto ast = parse_module(name, std::string(bytes.begin(), bytes.end()));
        env = interp_.exec_module_private(ast,
                                          [this](const std::string& n) { return import_module(n); });
    } catch (...) {
        in_progress_.erase(name);
        throw;
    }
    in_progress_.erase(name);
    modules_[name] = env;
    return env;
}

TensorHandle HermeticImporter::materialize_data(uint64_t index) {
    auto it = data_cache_.find(index);
    if (it != data_cache_.end()) return it->second;
    const std::string entry = "data/" + std::to_string(index) + ".nt";
    if (!archive_->zip->contains(entry)) {
        throw FormatError("archive " + archive_->path + " has no data file " + entry);
    }
    TensorHandle handle = decode_ntb1(archive_->zip->read(entry));
    data_cache_.emplace(index, handle);
    return handle;
}

Value HermeticImporter::load_pickle(const std::string& package, const std::string& resource) {
    GilGuard gil(interp_);
    const std::string entry = package + "/" + resource;
    if (!archive_->zip->contains(entry)) {
        throw FormatError("resource " + entry + " not found in archive " + archive_->path);
    }
    auto bytes = archive_->zip->read(entry);
    // Stream keys are archive data indices; swap in live blob keys,
    // materializing each data file at most once per importer.
    auto live = rewrite_blob_keys(bytes, [&](BlobKey index) {
        return materialize_data(index).key();
    });
    return unpickle(live, *this);
}

Value HermeticImporter::resolve(const std::string& module, const std::string& name) {
    auto env = import_module(module);
    auto v = env->get(name);
    if (!v) {
        throw AttributeError("module '" + module + "' has no attribute '" + name +
                             "' (archive " + archive_->path + ")");
    }
    return *v;
}

std::string HermeticImporter::describe() const {
    return "importer(" + archive_->path + ")";
}

}  // namespace mscript
