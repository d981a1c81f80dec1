// Typed client for the read-only hierarchy API. Every request is GET and
// every request is appended to `log`, which the tests audit.

export interface ChildPreview {
  id: string;
  name: string;
  paper_count: number;
}

export interface PaperEntry {
  id: string;
  title: string;
  year: number | null;
}

export interface Crumb {
  id: string;
  name: string;
}

export interface NodeView {
  id: string;
  name: string;
  layer: number;
  summary: Record<string, string>;
  paper_count: number;
  children: ChildPreview[];
  papers: PaperEntry[];
  breadcrumb: Crumb[];
}

export interface BuildInfo {
  build: string;
  contribution_type: string | null;
  builder?: string | null;
  root: string;
  stats: Record<string, unknown>;
}

export interface SearchHit {
  id: string;
  title: string;
  year: number | null;
  leaf: string;
  path: string[];
}

export interface SearchResponse {
  query: string;
  hits: SearchHit[];
}

export interface PaperDetail {
  id: string;
  title: string;
  abstract: string;
  venue: string;
  year: number | null;
  citation_count: number;
  paths: Record<string, Crumb[]>;
}

export interface RequestLogEntry {
  method: string;
  url: string;
}

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (url: string, init?: { method?: string }) => Promise<{
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}>;

export class ApiClient {
  readonly log: RequestLogEntry[] = [];

  constructor(
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
    private readonly baseUrl: string = "",
  ) {}

  private async get<T>(path: string): Promise<T> {
    const url = this.baseUrl + path;
    this.log.push({ method: "GET", url });
    const resp = await this.fetchFn(url, { method: "GET" });
    if (!resp.ok) {
      throw new ApiError(`GET ${path} failed with status ${resp.status}`, resp.status);
    }
    return (await resp.json()) as T;
  }

  hierarchies(): Promise<BuildInfo[]> {
    return this.get("/hierarchies");
  }

  node(build: string, nodeId: string): Promise<NodeView> {
    return this.get(`/node/${encodeURIComponent(build)}/${encodeURIComponent(nodeId)}`);
  }

  search(build: string, query: string): Promise<SearchResponse> {
    return this.get(`/search/${encodeURIComponent(build)}?q=${encodeURIComponent(query)}`);
  }

  paper(paperId: string): Promise<PaperDetail> {
    return this.get(`/paper/${encodeURIComponent(paperId)}`);
  }
}
