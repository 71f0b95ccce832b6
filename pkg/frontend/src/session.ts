/**
 * Consent gate state and session token persistence.
 *
 * The rule the UI enforces: no chat input exists until a session token has
 * been acquired, and a token can only be acquired by checking the consent
 * box first. The token lives in sessionStorage, so a reload within the
 * browser session restores the transcript while closing the tab forgets it.
 */

const TOKEN_KEY = "tutorkit.session.token";

export interface GateState {
  consentChecked: boolean;
  token: string | null;
  error: string | null;
}

export function initialGate(): GateState {
  return { consentChecked: false, token: null, error: null };
}

export function setConsent(state: GateState, checked: boolean): GateState {
  return { ...state, consentChecked: checked, error: null };
}

/** The start control is enabled only once the box is checked. */
export function canStart(state: GateState): boolean {
  return state.consentChecked && state.token === null;
}

export function sessionStarted(state: GateState, token: string): GateState {
  return { ...state, token, error: null };
}

export function sessionBlocked(state: GateState, error: string): GateState {
  return { ...state, token: null, error };
}

export function saveToken(token: string, storage: Storage = sessionStorage): void {
  storage.setItem(TOKEN_KEY, token);
}

export function loadToken(storage: Storage = sessionStorage): string | null {
  return storage.getItem(TOKEN_KEY);
}

export function clearToken(storage: Storage = sessionStorage): void {
  storage.removeItem(TOKEN_KEY);
}
