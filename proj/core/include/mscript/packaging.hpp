#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mscript/interpreter.hpp"
#include "mscript/pickle.hpp"
#include "mscript/zipfile.hpp"

namespace mscript {

// Dotted module pattern. Segments are literals, "*" (exactly one segment), or
// "**" (zero or more segments); matching is whole-name, and "a.**" matches
// the root "a" itself.
class ModulePattern {
public:
    explicit ModulePattern(const std::string& pattern);  // throws PatternError
    bool matches(const std::string& dotted_name) const;
    const std::string& text() const { return text_; }

private:
    std::string text_;
    std::vector<std::string> segments_;
};

enum class ModuleClass { intern, extern_, mock };

// First matching category wins, in extern > mock > intern order.
ModuleClass classify_module(const std::string& name,
                            const std::vector<ModulePattern>& extern_patterns,
                            const std::vector<ModulePattern>& mock_patterns);

// Source lookup for intern modules; nullopt when unknown.
using SourceProvider = std::function<std::optional<std::string>(const std::string& module_name)>;

// Archive layout (all entries stored, sorted, zero timestamps):
//   code/<module with '.'->'/'>.ms   source files
//   <package>/<resource>             pickle streams (TENSOR keys are data indices)
//   data/<n>.nt                      blob files, NTB1
//   extern_modules                   sorted module names, LF-separated
//   mocked_modules                   same format
class Exporter {
public:
    Exporter(std::filesystem::path target, SourceProvider provider,
             std::vector<GlobalResolver*> importers = {});

    void mark_extern(const std::vector<std::string>& patterns);
    void mark_mock(const std::vector<std::string>& patterns);

    // Stages a pickle at <package>/<resource>; its global refs seed the
    // dependency worklist and its blobs become data/ entries.
    void save_pickle(const std::string& package, const std::string& resource, const Value& value);
    // Explicit inclusion for modules the scanner cannot see.
    void save_module(const std::string& name);

    // Computes the transitive dependency closure and writes the archive.
    // Aggregates every unresolved dependency into one DependencyError.
    void finalize();

    // Introspection (current classification state).
    std::set<std::string> extern_module_names() const { return extern_names_; }
    std::set<std::string> mocked_module_names() const { return mock_names_; }

private:
    struct Requirement {
        std::string module;
        std::string needed_by;  // human-readable origin link
    };

    void require(const std::string& module, const std::string& needed_by);
    std::string chain_for(const std::string& module) const;

    std::filesystem::path target_;
    SourceProvider provider_;
    std::vector<GlobalResolver*> importers_;
    std::vector<ModulePattern> extern_patterns_;
    std::vector<ModulePattern> mock_patterns_;

    std::vector<Requirement> worklist_;
    std::map<std::string, std::string> origin_;  // module -> needed_by
    std::set<std::string> extern_names_;
    std::set<std::string> mock_names_;
    std::map<std::string, std::string> sources_;  // intern module -> source text

    struct StagedPickle {
        std::string entry_name;
        std::vector<uint8_t> bytes;  // TENSOR keys already rewritten to indices
    };
    std::vector<StagedPickle> pickles_;
    std::map<BlobKey, uint64_t> data_index_;     // live key -> data index
    std::vector<TensorHandle> staged_blobs_;     // retention until finalize
    bool finalized_ = false;
};

// Parsed, immutable archive contents shared by every importer over one file.
struct ArchiveData {
    std::string path;
    std::shared_ptr<const ZipReader> zip;
    std::set<std::string> extern_modules;
    std::set<std::string> mocked_modules;

    static std::shared_ptr<const ArchiveData> open(const std::filesystem::path& path);
    bool is_mocked(const std::string& name) const;
};

// Hermetic importer: package-private module table, extern delegation to the
// interpreter's system registry, mock stubs synthesized from mocked_modules.
// Bound to one interpreter and follows its lock discipline.
class HermeticImporter : public GlobalResolver {
public:
    HermeticImporter(Interpreter& interp, const std::filesystem::path& archive_path);
    HermeticImporter(Interpreter& interp, std::shared_ptr<const ArchiveData> archive);

    std::shared_ptr<ModuleEnv> import_module(const std::string& name);
    Value load_pickle(const std::string& package, const std::string& resource);

    // GlobalResolver: import_module + attribute lookup.
    Value resolve(const std::string& module, const std::string& name) override;
    std::string describe() const override;

    Interpreter& interpreter() { return interp_; }
    const std::set<std::string>& extern_modules() const { return archive_->extern_modules; }
    const std::set<std::string>& mocked_modules() const { return archive_->mocked_modules; }
    size_t module_count() const { return modules_.size(); }
    // Names resolved through the system registry so far (hermeticity audit).
    const std::set<std::string>& system_lookups() const { return system_lookups_; }

private:
    TensorHandle materialize_data(uint64_t index);

    Interpreter& interp_;
    std::shared_ptr<const ArchiveData> archive_;
    std::map<std::string, std::shared_ptr<ModuleEnv>> modules_;
    std::set<std::string> in_progress_;
    std::map<uint64_t, TensorHandle> data_cache_;
    std::set<std::string> system_lookups_;
};

}  // namespace mscript
